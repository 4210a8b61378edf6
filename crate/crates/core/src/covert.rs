//! Detectability of the transmission by the warden.
//!
//! The warden compares `N(0, σ_w²)` (silence) against `N(0, g_w·P + σ_w²)`
//! (transmission at power `P`). The KL divergence between the two bounds the
//! warden's total detection error from below; keeping it under `2ε²` keeps
//! that error above `1 − ε`.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::ratesplit::Beamformer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovertBudget {
    epsilon: f64,
}

impl CovertBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::config("epsilon", format!("must lie in (0,1), got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Largest admissible divergence, `2ε²` nats.
    pub fn threshold(&self) -> f64 {
        2.0 * self.epsilon * self.epsilon
    }
}

fn check_args(warden_gain: f64, power: f64, noise_sd: f64) -> Result<()> {
    if !(noise_sd > 0.0) || !noise_sd.is_finite() {
        return Err(Error::domain(format!("warden noise sd must be > 0, got {noise_sd}")));
    }
    if !(warden_gain >= 0.0) || !(power >= 0.0) {
        return Err(Error::domain("warden gain and power must be >= 0"));
    }
    Ok(())
}

/// `D(P0‖P1) = ln √(g_w P + σ_w²) − ln σ_w + σ_w² / (2(g_w P + σ_w²)) − ½`, in nats.
pub fn kl_closed_form(warden_gain: f64, power: f64, noise_sd: f64) -> Result<f64> {
    check_args(warden_gain, power, noise_sd)?;
    Ok(kl_of_snr(warden_gain * power / (noise_sd * noise_sd)))
}

/// `½ln(1+x) + 1/(2(1+x)) − ½`, by its power series when `x` is small.
fn kl_of_snr(x: f64) -> f64 {
    if x < 1e-3 {
        // ½·Σ_{n≥2} (−1)^n (n−1)/n · x^n
        let mut sum = 0.0;
        let mut xn = x * x;
        for n in 2..10 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (n - 1) as f64 / n as f64 * xn;
            xn *= x;
        }
        0.5 * sum
    } else {
        (0.5 * x.ln_1p() + 0.5 / (1.0 + x) - 0.5).max(0.0)
    }
}

/// Quadrature of `∫ p0 ln(p0/p1)` over `±12·max(a, b)`.
pub fn kl_numeric(warden_gain: f64, power: f64, noise_sd: f64) -> Result<f64> {
    kl_numeric_truncated(warden_gain, power, noise_sd, 12.0)
}

/// As [`kl_numeric`] with the integration range `±half_width·max(a, b)`.
pub fn kl_numeric_truncated(
    warden_gain: f64,
    power: f64,
    noise_sd: f64,
    half_width: f64,
) -> Result<f64> {
    check_args(warden_gain, power, noise_sd)?;
    let a = noise_sd;
    let b = (warden_gain * power + a * a).sqrt();
    let log_pdf = |x: f64, sd: f64| {
        -0.5 * (x / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    };
    let integrand = |x: f64| {
        let l0 = log_pdf(x, a);
        let l1 = log_pdf(x, b);
        l0.exp() * (l0 - l1)
    };

    let limit = half_width * a.max(b);
    // p0 lives on a scale of `a`; seed the partition so the adaptive pass
    // does not have to discover that by itself.
    let mut cuts = vec![-limit, limit, 0.0];
    for m in [1.0, 3.0, 6.0, 12.0] {
        if m * a < limit {
            cuts.push(m * a);
            cuts.push(-m * a);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += adaptive_gauss_kronrod(&integrand, w[0], w[1], 1e-14, 60)?;
    }
    Ok(total)
}

// 15-point Kronrod nodes on [0, 1] (symmetric), with the embedded 7-point Gauss rule.
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS[i] * pair;
        // Gauss nodes are the odd-indexed Kronrod nodes
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adaptive_gauss_kronrod(
    f: &impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    let (value, err) = gk15(f, lo, hi);
    if err <= tol || (hi - lo).abs() < 1e-300 {
        return Ok(value);
    }
    if max_depth == 0 {
        return Err(Error::Numerical(format!(
            "quadrature on [{lo}, {hi}] did not converge (error estimate {err:e})"
        )));
    }
    let mid = 0.5 * (lo + hi);
    Ok(adaptive_gauss_kronrod(f, lo, mid, 0.5 * tol, max_depth - 1)?
        + adaptive_gauss_kronrod(f, mid, hi, 0.5 * tol, max_depth - 1)?)
}

/// `ξ ≥ 1 − √(D/2)`, clamped at zero.
pub fn detection_error_lower_bound(kl: f64) -> Result<f64> {
    if !(kl >= 0.0) {
        return Err(Error::domain(format!("divergence must be >= 0, got {kl}")));
    }
    Ok((1.0 - (kl / 2.0).sqrt()).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovertCheck {
    pub kl: f64,
    pub radiated_power: f64,
    pub covert: bool,
}

/// Evaluates the divergence at the power the beamformer actually radiates.
pub fn is_covert(bf: &Beamformer, params: &ChannelParams, budget: &CovertBudget) -> Result<CovertCheck> {
    let radiated_power = bf.total_power();
    let kl = kl_closed_form(
        params.warden_gain,
        radiated_power,
        params.warden_noise_var.sqrt(),
    )?;
    Ok(CovertCheck {
        kl,
        radiated_power,
        covert: kl <= budget.threshold(),
    })
}

/// The power at which the divergence reaches the budget's threshold.
pub fn max_covert_power(budget: &CovertBudget, warden_gain: f64, noise_sd: f64) -> Result<f64> {
    if !(warden_gain > 0.0) {
        return Err(Error::domain(format!("warden gain must be > 0, got {warden_gain}")));
    }
    check_args(warden_gain, 0.0, noise_sd)?;
    // The divergence depends on P only through the received SNR x = g_w·P/σ_w².
    let target = budget.threshold();
    let mut hi = 1.0;
    while kl_of_snr(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kl_of_snr(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let snr = 0.5 * (lo + hi);
    Ok(snr * noise_sd * noise_sd / warden_gain)
}
