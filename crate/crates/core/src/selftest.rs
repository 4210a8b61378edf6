//! Reference-value checks runnable from the command line.

use crate::covert::{detection_error_lower_bound, kl_closed_form, kl_numeric, max_covert_power, CovertBudget};
use crate::numerics::{q_function, q_inverse};
use crate::ratesplit::{fbl_rate, shannon_rate};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn close(name: &'static str, got: f64, want: f64, tol: f64) -> Check {
    let err = (got - want).abs();
    Check {
        name,
        passed: err <= tol,
        detail: format!("got {got:.15e}, want {want:.15e}, |diff| {err:.2e} (tol {tol:.0e})"),
    }
}

fn failed(name: &'static str, e: crate::Error) -> Check {
    Check {
        name,
        passed: false,
        detail: e.to_string(),
    }
}

macro_rules! try_check {
    ($name:expr, $e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return failed($name, e),
        }
    };
}

/// Runs all checks. Values were computed in 50-digit arithmetic.
pub fn run() -> Vec<Check> {
    let checks: Vec<fn() -> Check> = vec![
        || close("q_function(3.0902)", try_check!("q_function(3.0902)", q_function(3.0902)), 1.000108783207071e-3, 1e-15),
        || close("q_inverse(1e-3)", try_check!("q_inverse(1e-3)", q_inverse(1e-3)), 3.0902323061678135, 1e-12),
        || close("q_inverse(1e-5)", try_check!("q_inverse(1e-5)", q_inverse(1e-5)), 4.264890793922825, 1e-12),
        || close("fbl_rate(10, 500, 1e-3)", try_check!("fbl", fbl_rate(10.0, 500.0, 1e-3)), 3.269843420079911, 1e-12),
        || close("fbl_rate(0.5, 200, 1e-5)", try_check!("fbl", fbl_rate(0.5, 200.0, 1e-5)), 0.2797838981660508, 1e-12),
        || {
            let mut worst = 0.0f64;
            for g in [0.1, 1.0, 10.0, 100.0] {
                let f = try_check!("fbl limit", fbl_rate(g, 1e7, 1e-3));
                worst = worst.max((f - shannon_rate(g)).abs());
            }
            Check {
                name: "fbl_rate -> log2(1+γ) at l = 1e7",
                passed: worst < 1e-2,
                detail: format!("max |diff| {worst:.3e}"),
            }
        },
        || close("kl_closed_form(0.4, 100, 1)", try_check!("kl", kl_closed_form(0.4, 100.0, 1.0)), 1.368981155303373, 1e-12),
        || {
            let mut worst = 0.0f64;
            for gw in [0.1, 0.4, 1.0] {
                for p in [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0] {
                    for s in [0.5, 1.0, 2.0] {
                        let a = try_check!("kl grid", kl_closed_form(gw, p, s));
                        let b = try_check!("kl grid", kl_numeric(gw, p, s));
                        worst = worst.max((a - b).abs());
                    }
                }
            }
            Check {
                name: "closed-form vs quadrature divergence",
                passed: worst < 1e-6,
                detail: format!("max |diff| {worst:.3e} over 54 points"),
            }
        },
        || {
            let mut ok = true;
            for eps in [0.01, 0.05, 0.1, 0.2, 0.5] {
                ok &= detection_error_lower_bound(2.0 * eps * eps).is_ok_and(|v| v == 1.0 - eps);
            }
            Check {
                name: "detection bound at the threshold",
                passed: ok,
                detail: "1 - sqrt(kl/2) == 1 - ε for five budgets".into(),
            }
        },
        || {
            let budget = try_check!("max covert power", CovertBudget::new(0.1));
            let p = try_check!("max covert power", max_covert_power(&budget, 0.4, 1.0));
            close("max_covert_power(ε=0.1, g_w=0.4)", p, 0.863961864773755, 1e-9)
        },
    ];
    checks.into_iter().map(|f| f()).collect()
}
