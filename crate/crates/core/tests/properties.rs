#![allow(clippy::needless_range_loop)]
use covert_rsma::agent::ppo::{gaussian_log_prob, ppo_loss, ppo_loss_grad, sample_action};
use covert_rsma::channel::{draw_channel_state, ChannelState};
use covert_rsma::covert::{detection_error_lower_bound, kl_closed_form};
use covert_rsma::env::{decode_action, evaluate_action, EnvConfig};
use covert_rsma::numerics::{inner_product, q_function, q_inverse, ComplexVector};
use covert_rsma::ratesplit::{fbl_rate, rate_report, sdma_report, Beamformer, Regime, SplitLengths, MIN_BLOCKLENGTH};
use covert_rsma::{Access, RawAction, Rng};
use num_complex::Complex64;
use proptest::prelude::*;

fn complex_vec(len: usize) -> impl Strategy<Value = ComplexVector> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), len)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

fn channel(seed: u64, power: f64) -> ChannelState {
    let cfg = EnvConfig::reference();
    draw_channel_state(&cfg.channel, power, &mut Rng::new(seed)).unwrap()
}

proptest! {
    #[test]
    fn q_roundtrip(x in -6.0..6.0f64) {
        let back = q_inverse(q_function(x).unwrap()).unwrap();
        // one ulp of Q(x) near 1 moves x by ε/φ(x)
        let density = (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let tol = 1e-9 + 4.0 * f64::EPSILON / density;
        prop_assert!((back - x).abs() < tol, "{x} -> {back}");
    }

    #[test]
    fn self_inner_product_is_norm(a in complex_vec(5)) {
        let ip = inner_product(&a, &a).unwrap();
        prop_assert!(ip.im.abs() < 1e-12);
        prop_assert!((ip.re - a.norm_sqr()).abs() <= 1e-12 * a.norm_sqr().max(1.0));
    }

    #[test]
    fn fbl_monotone_past_the_dip(l in 10.0..1e6f64, delta in 1e-6..0.5f64, g in 0.0..1e4f64, dg in 0.0..10.0f64) {
        // (1+γ)√(γ(γ+2)) ≥ Q⁻¹(δ)/√l locates the minimum of the raw formula
        let q = q_inverse(delta).unwrap().max(0.0);
        let past = |g: f64| (1.0 + g) * (g * (g + 2.0)).sqrt() >= q / l.sqrt();
        prop_assume!(g > 0.0 && past(g));
        let lo = fbl_rate(g, l, delta).unwrap();
        let hi = fbl_rate(g + dg, l, delta).unwrap();
        prop_assert!(hi >= lo - 1e-12, "l={l} δ={delta} γ={g}: {lo} > {hi}");
    }

    #[test]
    fn kl_increasing_in_power(gw in 0.01..2.0f64, p in 1e-3..1e4f64, f in 1.001..3.0f64, s in 0.1..3.0f64) {
        let a = kl_closed_form(gw, p, s).unwrap();
        let b = kl_closed_form(gw, p * f, s).unwrap();
        prop_assert!(a > 0.0 && b > a);
    }

    #[test]
    fn detection_bound_identity(eps in 1e-4..0.9999f64) {
        prop_assert_eq!(detection_error_lower_bound(2.0 * eps * eps).unwrap(), 1.0 - eps);
    }

    #[test]
    fn decoded_actions_are_feasible(
        seed in 0u64..1000,
        logits in prop::collection::vec(-30.0..30.0f64, 10),
        lens in prop::collection::vec(0.0..1000.0f64, 3),
        sdma in any::<bool>(),
    ) {
        let mut cfg = EnvConfig::reference();
        if sdma {
            cfg.access = Access::Sdma;
        }
        let ch = channel(seed, cfg.total_power);
        let d = decode_action(&RawAction(logits), &lens, &ch.estimated, &cfg).unwrap();
        let bf = &d.beamformer;
        prop_assert!(bf.total_power() <= cfg.total_power + 1e-9);
        prop_assert!(d.action.powers.iter().all(|&p| p >= 0.0));
        let share_sum: f64 = d.action.shares.iter().sum();
        prop_assert!((share_sum - 1.0).abs() < 1e-12);
        prop_assert!(d.action.splits.iter().all(|&s| (0.0..=1.0).contains(&s)));
        for k in 0..3 {
            prop_assert!(d.lengths.common[k] >= 0.0 && d.lengths.private[k] >= 0.0);
            prop_assert!((d.lengths.common[k] + d.lengths.private[k] - lens[k]).abs() < 1e-9);
        }
        if sdma {
            prop_assert_eq!(bf.common.norm_sqr(), 0.0);
        }
    }

    #[test]
    fn reward_iff_no_penalty(seed in 0u64..500, logits in prop::collection::vec(-8.0..4.0f64, 10), ibl in any::<bool>()) {
        let mut cfg = EnvConfig::reference();
        if ibl {
            cfg.regime = Regime::Ibl;
        }
        let ch = channel(seed, cfg.total_power);
        let out = evaluate_action(&RawAction(logits), &ch, &[300.0, 500.0, 800.0], &cfg).unwrap();
        if out.penalty == 0.0 {
            prop_assert_eq!(out.reward, out.report.min_rate);
        } else {
            prop_assert_eq!(out.reward, 0.0);
        }
        prop_assert!(out.reward > 0.0 || out.penalty > 0.0 || out.report.min_rate == 0.0);
        if ibl {
            prop_assert!(out.penalty == 0.0 || out.qos_violated.iter().any(|&v| v));
        }
    }

    #[test]
    fn self_ratio_is_one(seed in 0u64..1000, mean in prop::collection::vec(-3.0..3.0f64, 10), ls in -2.0..1.0f64) {
        let log_std = vec![ls; 10];
        let mut rng = Rng::new(seed);
        let (a, lp) = sample_action(&mean, &log_std, &mut rng);
        let again = gaussian_log_prob(a.as_slice(), &mean, &log_std);
        prop_assert!(((again - lp).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_sided_clipping(r in 0.0..3.0f64, a in -5.0..5.0f64) {
        let clip = 0.2;
        let g = ppo_loss_grad(r, a, clip);
        if (a > 0.0 && r > 1.0 + clip) || (a < 0.0 && r < 1.0 - clip) {
            prop_assert_eq!(g, 0.0);
        }
        if (r - 1.0).abs() < clip {
            prop_assert_eq!(g, a);
            prop_assert_eq!(ppo_loss(r, a, clip), r * a);
        }
    }
}

/// Random feasible inputs for the report fuzz.
fn random_case(rng: &mut Rng) -> (ChannelState, Beamformer, SplitLengths, Vec<f64>, Regime) {
    let ch = channel(rng.below(1 << 30) as u64, 10f64.powf(rng.uniform(0.0, 4.0)));
    let p = |rng: &mut Rng, scale: f64| -> ComplexVector {
        (0..3)
            .map(|_| Complex64::new(rng.standard_normal(), rng.standard_normal()) * scale)
            .collect()
    };
    let scale = 10f64.powf(rng.uniform(-3.0, 1.5));
    let common = if rng.uniform(0.0, 1.0) < 0.2 { ComplexVector::zeros(3) } else { p(rng, scale) };
    let privates = (0..3).map(|_| p(rng, scale)).collect();
    let bf = Beamformer::new(common, privates).unwrap();
    let totals: Vec<f64> = (0..3).map(|_| rng.uniform(0.0, 1000.0)).collect();
    let common_len: Vec<f64> = totals.iter().map(|&t| t * rng.uniform(0.0, 1.0)).collect();
    let private_len: Vec<f64> = totals.iter().zip(&common_len).map(|(t, c)| t - c).collect();
    let lens = SplitLengths::new(common_len, private_len).unwrap();
    let raw: Vec<f64> = (0..3).map(|_| rng.uniform(0.0, 1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let shares = raw.iter().map(|x| x / sum.max(1e-300)).collect();
    let regime = if rng.uniform(0.0, 1.0) < 0.5 { Regime::Fbl } else { Regime::Ibl };
    (ch, bf, lens, shares, regime)
}

#[test]
fn rate_report_invariants_fuzz() {
    let mut rng = Rng::new(2024);
    for case in 0..10_000 {
        let (ch, bf, lens, shares, regime) = random_case(&mut rng);
        let r = rate_report(&ch, &bf, &lens, &shares, &[1e-3; 3], regime).unwrap();
        let c_sum: f64 = r.common_shares.iter().sum();
        assert!(c_sum <= r.common_rate + 1e-9, "case {case}");
        for k in 0..3 {
            assert!(r.common_shares[k] >= 0.0 && r.private_rates[k] >= 0.0, "case {case}");
            assert!(r.sinr_common[k] >= 0.0 && r.sinr_private[k] >= 0.0);
            assert!((r.totals[k] - (r.common_shares[k] + r.private_rates[k])).abs() < 1e-12);
        }
        assert!((r.sum_rate - r.totals.iter().sum::<f64>()).abs() < 1e-12);
        assert_eq!(r.min_rate, r.totals.iter().copied().fold(f64::INFINITY, f64::min));
        assert!(r.common_rate >= 0.0 && r.common_rate.is_finite());
    }
}

#[test]
fn sdma_report_matches_zero_common_power() {
    let mut rng = Rng::new(99);
    for _ in 0..500 {
        let (ch, bf, lens, shares, regime) = random_case(&mut rng);
        let totals = lens.totals();
        let sdma = sdma_report(&ch, &bf.privates, &totals, &[1e-3; 3], regime).unwrap();
        let rsma = rate_report(&ch, &bf.without_common(), &SplitLengths::all_private(&totals), &shares, &[1e-3; 3], regime)
            .unwrap();
        assert_eq!(sdma.totals, rsma.totals);
        assert_eq!(sdma.common_rate, 0.0);
    }
}

#[test]
fn fbl_dip_near_zero_sinr() {
    // The raw approximation starts at log2(l)/(2l) and dips before rising.
    let (l, d) = (100.0f64, 1e-3);
    let floor = l.log2() / (2.0 * l);
    let tiny = fbl_rate(1e-12, l, d).unwrap();
    assert!((tiny - floor).abs() < 1e-4);
    assert!(fbl_rate(1e-2, l, d).unwrap() < tiny);
    assert_eq!(fbl_rate(0.0, l, d).unwrap(), 0.0);
    assert!(fbl_rate(1.0, MIN_BLOCKLENGTH - 1.0, d).is_err());
}
