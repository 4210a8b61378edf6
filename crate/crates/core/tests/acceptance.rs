//! End-to-end acceptance suite. Prints one line per criterion and exits
//! nonzero if any criterion fails.

use std::time::Instant;

use covert_rsma::agent::ppo::{gaussian_log_prob, ppo_loss, ppo_loss_grad, surrogate_and_grad, value_loss_and_grad, Sample};
use covert_rsma::channel::ChannelState;
use covert_rsma::covert::{detection_error_lower_bound, kl_closed_form, kl_numeric, max_covert_power, CovertBudget};
use covert_rsma::env::{evaluate_action, EnvConfig};
use covert_rsma::experiment::{run_experiment, run_jobs, ExperimentSpec, JobResult, Scheme, Sweep};
use covert_rsma::metrics::{average, EpisodeMetrics};
use covert_rsma::ratesplit::{fbl_rate, shannon_rate, Regime};
use covert_rsma::{Access, Mlp, RawAction, Rng};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn kl_oracle() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for gw in [0.1, 0.4, 1.0] {
        for p in [0.0, 0.1, 1.0, 10.0, 100.0, 1e4] {
            for s in [0.5, 1.0, 2.0] {
                let a = kl_closed_form(gw, p, s).unwrap();
                let b = kl_numeric(gw, p, s).unwrap();
                worst = worst.max((a - b).abs());
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(worst < 1e-6 && secs < 10.0, format!("max |closed − quadrature| = {worst:.2e} over 54 points in {secs:.2}s"))
}

fn detection_identity() -> Outcome {
    let eps = [0.01, 0.05, 0.1, 0.2, 0.5];
    let bad: Vec<f64> = eps
        .iter()
        .copied()
        .filter(|&e| detection_error_lower_bound(2.0 * e * e).unwrap() != 1.0 - e)
        .collect();
    outcome(bad.is_empty(), format!("exact for {} budgets, mismatches {bad:?}", eps.len() - bad.len()))
}

fn fbl_limit() -> Outcome {
    let diffs: Vec<f64> = [0.1, 1.0, 10.0, 100.0]
        .iter()
        .map(|&g| (fbl_rate(g, 1e7, 1e-3).unwrap() - shannon_rate(g)).abs())
        .collect();
    let worst = diffs.iter().copied().fold(0.0, f64::max);
    outcome(worst < 1e-2, format!("|fbl − shannon| at l = 1e7: {diffs:?}"))
}

/// Best min-rate over a logit grid on the error-free channels at 30 dB.
fn best_min_rate(cfg: &EnvConfig, channel: &ChannelState, grid: &[Vec<f64>]) -> f64 {
    let lengths = [600.0; 3];
    grid.iter()
        .map(|a| evaluate_action(&RawAction(a.clone()), channel, &lengths, cfg).unwrap().report.min_rate)
        .fold(0.0, f64::max)
}

fn structural_dominance() -> Outcome {
    let t = Instant::now();
    let common = [f64::NEG_INFINITY, -2.0, 0.0, 2.0, 4.0];
    let private = [-2.0, 0.0, 2.0, 4.0, 6.0];
    let splits = [f64::NEG_INFINITY, 0.0];
    let shares = [[0.0, 0.0, 0.0], [0.0, 0.0, 3.0], [0.0, 2.0, 4.0]];
    let mut grid = Vec::new();
    for c in common {
        for p1 in private {
            for p2 in private {
                for p3 in private {
                    for s1 in splits {
                        for s2 in splits {
                            for s3 in splits {
                                for sh in shares {
                                    let mut a = vec![c, p1, p2, p3, s1, s2, s3];
                                    a.extend(sh);
                                    grid.push(a);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let mut details = Vec::new();
    let mut ok = grid.len() >= 10_000;
    for regime in [Regime::Ibl, Regime::Fbl] {
        let mut rsma = EnvConfig::reference();
        rsma.total_power = 1000.0;
        rsma.regime = regime;
        let channel = ChannelState::exact(&rsma.channel).unwrap();
        let sdma = EnvConfig {
            access: Access::Sdma,
            ..rsma.clone()
        };
        let best_rsma = best_min_rate(&rsma, &channel, &grid);
        let best_sdma = best_min_rate(&sdma, &channel, &grid);
        ok &= best_rsma >= best_sdma;
        details.push(format!("{regime}: RSMA {best_rsma:.4} ≥ SDMA {best_sdma:.4}"));
    }
    let secs = t.elapsed().as_secs_f64();
    ok &= secs < 120.0;
    outcome(ok, format!("{} grid points; {} ({secs:.1}s)", grid.len(), details.join(", ")))
}

/// Surrogate objective recomputed from scratch for finite differences.
fn surrogate(policy: &Mlp, log_std: &[f64], samples: &[Sample<'_>], clip: f64, ent: f64) -> f64 {
    let n = samples.len() as f64;
    let mut total = 0.0;
    for s in samples {
        let mean = policy.forward(s.observation).unwrap();
        let ratio = (gaussian_log_prob(s.action, &mean, log_std) - s.old_log_prob).exp();
        let a = s.advantage;
        let clipped = if a >= 0.0 { (1.0 + clip) * a } else { (1.0 - clip) * a };
        total += (ratio * a).min(clipped) / n;
    }
    total + ent * log_std.iter().sum::<f64>()
}

fn value_mse(value: &Mlp, samples: &[Sample<'_>]) -> f64 {
    let n = samples.len() as f64;
    samples
        .iter()
        .map(|s| (value.forward(s.observation).unwrap()[0] - s.target).powi(2) / n)
        .sum()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn central_diff(params: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = params[i];
    params[i] = orig + h;
    let up = f(params);
    params[i] = orig - h;
    let down = f(params);
    params[i] = orig;
    (up - down) / (2.0 * h)
}

fn gradient_checks() -> Outcome {
    let t = Instant::now();
    let (obs_dim, act_dim, h, clip, ent) = (6, 10, 1e-5, 0.2, 0.01);
    let mut worst = 0.0f64;
    let mut instance = 0u64;
    let mut done = 0;
    while done < 10 {
        instance += 1;
        let mut rng = Rng::new(1000 + instance);
        let mut policy = Mlp::orthogonal(&[obs_dim, 64, 64, act_dim], 1.0, 1.0, &mut rng);
        let mut value = Mlp::orthogonal(&[obs_dim, 64, 64, 1], 1.0, 1.0, &mut rng);
        for p in policy.params_mut().iter_mut().chain(value.params_mut()) {
            *p += 0.05 * rng.standard_normal();
        }
        let mut log_std: Vec<f64> = (0..act_dim).map(|_| rng.uniform(-1.5, 0.0)).collect();
        let n = 8;
        let obs: Vec<Vec<f64>> = (0..n).map(|_| (0..obs_dim).map(|_| rng.uniform(0.0, 2.0)).collect()).collect();
        let act: Vec<Vec<f64>> = (0..n).map(|_| (0..act_dim).map(|_| rng.uniform(-2.0, 2.0)).collect()).collect();
        // Old log-probs put the ratios on both sides of the clip range.
        let old: Vec<f64> = (0..n)
            .map(|i| {
                let mean = policy.forward(&obs[i]).unwrap();
                gaussian_log_prob(&act[i], &mean, &log_std) - rng.uniform(-0.5, 0.5)
            })
            .collect();
        let samples: Vec<Sample<'_>> = (0..n)
            .map(|i| Sample {
                observation: &obs[i],
                action: &act[i],
                old_log_prob: old[i],
                advantage: rng.standard_normal(),
                target: rng.uniform(-5.0, 5.0),
            })
            .collect();
        // Skip instances with a ratio near a kink of the clipped objective.
        let near_kink = samples.iter().any(|s| {
            let mean = policy.forward(s.observation).unwrap();
            let r = (gaussian_log_prob(s.action, &mean, &log_std) - s.old_log_prob).exp();
            (r - 1.0 - clip).abs() < 1e-3 || (r - 1.0 + clip).abs() < 1e-3
        });
        if near_kink {
            continue;
        }

        let pg = surrogate_and_grad(&policy, &log_std, &samples, clip, ent).unwrap();
        let (_, vg) = value_loss_and_grad(&value, &samples).unwrap();

        let sizes = policy.sizes().to_vec();
        let mut params = policy.params().to_vec();
        let fd: Vec<f64> = (0..params.len())
            .map(|i| {
                central_diff(&mut params, i, h, |p| {
                    surrogate(&Mlp::from_params(&sizes, p.to_vec()).unwrap(), &log_std, &samples, clip, ent)
                })
            })
            .collect();
        for r in policy.tensor_ranges() {
            worst = worst.max(rel_err(&pg.net[r.clone()], &fd[r]));
        }
        let fd_std: Vec<f64> = (0..act_dim)
            .map(|i| central_diff(&mut log_std, i, h, |ls| surrogate(&policy, ls, &samples, clip, ent)))
            .collect();
        worst = worst.max(rel_err(&pg.log_std, &fd_std));

        let vsizes = value.sizes().to_vec();
        let mut vparams = value.params().to_vec();
        let vfd: Vec<f64> = (0..vparams.len())
            .map(|i| central_diff(&mut vparams, i, h, |p| value_mse(&Mlp::from_params(&vsizes, p.to_vec()).unwrap(), &samples)))
            .collect();
        for r in value.tensor_ranges() {
            worst = worst.max(rel_err(&vg[r.clone()], &vfd[r]));
        }
        done += 1;
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 30.0,
        format!("worst per-tensor relative error {worst:.2e} over 10 instances (policy, log-std, value) in {secs:.1}s"),
    )
}

fn clipping_contract() -> Outcome {
    let mut rng = Rng::new(6);
    let clip = 0.2;
    let (mut clipped, mut free, mut bad) = (0, 0, 0);
    for _ in 0..10_000 {
        let r = rng.uniform(0.01, 3.0);
        let a = if rng.uniform(0.0, 1.0) < 0.5 { 1.0 } else { -1.0 };
        let g = ppo_loss_grad(r, a, clip);
        let on_clipped = (a > 0.0 && r > 1.0 + clip) || (a < 0.0 && r < 1.0 - clip);
        if on_clipped {
            clipped += 1;
            bad += usize::from(g != 0.0 || ppo_loss(r, a, clip) != (1.0 + clip * a) * a);
        } else {
            free += 1;
            bad += usize::from(g != a || ppo_loss(r, a, clip) != r * a);
        }
    }
    outcome(bad == 0, format!("{clipped} clipped and {free} unclipped samples, {bad} violations"))
}

fn tail_by(results: &[JobResult], scheme: Scheme) -> Vec<(u64, &[EpisodeMetrics])> {
    results
        .iter()
        .filter(|r| r.job.scheme == scheme)
        .map(|r| (r.job.seed, r.metrics.as_slice()))
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Budget for the FBL training runs, in updates (one episode each).
const FBL_UPDATES: usize = 1000;
/// Budget for the IBL ordering runs.
const IBL_UPDATES: usize = 2000;

fn fbl_training() -> Outcome {
    let t = Instant::now();
    let spec = ExperimentSpec {
        schemes: vec![Scheme::PpoRsma, Scheme::GreedyRsma, Scheme::GreedySdma],
        regimes: vec![Regime::Fbl],
        episodes: FBL_UPDATES,
        workers: workers(),
        ..ExperimentSpec::default()
    };
    let results = run_jobs(&spec).unwrap();
    let last50 = |m: &[EpisodeMetrics]| average(&m[m.len().saturating_sub(50)..]);
    let mut ok = true;
    let mut mins = Vec::new();
    let mut sums = Vec::new();
    let mut lines = Vec::new();
    for (seed, m) in tail_by(&results, Scheme::PpoRsma) {
        let a = last50(m);
        ok &= a.avg_min_rate > 0.0 && a.covert_violation_rate <= 0.10;
        mins.push(a.avg_min_rate);
        sums.push(a.avg_sum_rate);
        lines.push(format!(
            "seed {seed}: min {:.4} sum {:.4} covert-viol {:.3}",
            a.avg_min_rate, a.avg_sum_rate, a.covert_violation_rate
        ));
    }
    for scheme in [Scheme::GreedyRsma, Scheme::GreedySdma] {
        let worst = tail_by(&results, scheme)
            .iter()
            .map(|(_, m)| last50(m).avg_min_rate)
            .fold(0.0, f64::max);
        ok &= worst == 0.0;
        lines.push(format!("{scheme} tail min {worst}"));
    }
    let (min_med, sum_med) = (median(mins), median(sums));
    let in_band = (0.2 * 0.007..=5.0 * 0.007).contains(&min_med) && (0.2 * 0.05..=5.0 * 0.05).contains(&sum_med);
    ok &= in_band;
    outcome(
        ok,
        format!(
            "P-RSMA {}; median min {min_med:.4} in [0.0014, 0.035] and sum {sum_med:.4} in [0.01, 0.25]: {in_band}; {FBL_UPDATES} updates, {:.0}s",
            lines.join("; "),
            t.elapsed().as_secs_f64()
        ),
    )
}

fn ibl_ordering() -> Outcome {
    let t = Instant::now();
    let mut spec = ExperimentSpec {
        schemes: vec![Scheme::PpoRsma, Scheme::PpoSdma, Scheme::GreedyRsma],
        regimes: vec![Regime::Ibl],
        episodes: IBL_UPDATES,
        workers: workers(),
        ..ExperimentSpec::default()
    };
    spec.system.power_db = 30.0;
    let results = run_jobs(&spec).unwrap();
    let tail_sum = |m: &[EpisodeMetrics]| average(&m[m.len() - m.len() / 10..]).avg_sum_rate;
    let per = |s| -> Vec<(u64, f64)> { tail_by(&results, s).into_iter().map(|(seed, m)| (seed, tail_sum(m))).collect() };
    let (pr, ps, gr) = (per(Scheme::PpoRsma), per(Scheme::PpoSdma), per(Scheme::GreedyRsma));
    let mut votes = 0;
    let mut lines = Vec::new();
    for i in 0..pr.len() {
        let (a, b, c) = (pr[i].1, ps[i].1, gr[i].1);
        let vote = a > 1.05 * b && b > 1.05 * c;
        votes += usize::from(vote);
        lines.push(format!("seed {}: P-RSMA {a:.3}, P-SDMA {b:.3}, G-RSMA {c:.3} -> {vote}", pr[i].0));
    }
    outcome(
        2 * votes > pr.len(),
        format!("{}; {IBL_UPDATES} updates, {:.0}s", lines.join("; "), t.elapsed().as_secs_f64()),
    )
}

fn covert_power() -> Outcome {
    let p = max_covert_power(&CovertBudget::new(0.1).unwrap(), 0.4, 1.0).unwrap();
    let kl = kl_numeric(0.4, p, 1.0).unwrap();
    outcome(
        (0.80..=0.92).contains(&p) && (kl - 0.02).abs() < 1e-8,
        format!("P* = {p:.12}, quadrature divergence there {kl:.12} (|Δ| {:.1e})", (kl - 0.02).abs()),
    )
}

fn determinism() -> Outcome {
    let spec = ExperimentSpec {
        sweep: Sweep::Epsilon,
        grid: vec![0.05, 0.2],
        regimes: vec![Regime::Fbl, Regime::Ibl],
        seeds: vec![1, 2],
        episodes: 4,
        workers: workers().max(2),
        ..ExperimentSpec::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let outs: Vec<_> = dirs.iter().map(|d| run_experiment(&spec, d.path(), false).unwrap()).collect();
    let read = |p: &std::path::Path| std::fs::read(p).unwrap();
    let same_series = read(&outs[0].series) == read(&outs[1].series);
    let same_summary = read(&outs[0].summary) == read(&outs[1].summary);
    let rows = read(&outs[0].series).iter().filter(|&&b| b == b'\n').count() - 1;
    outcome(
        same_series && same_summary,
        format!("{rows} series rows; series identical {same_series}, summary identical {same_summary}"),
    )
}

fn main() {
    // libtest-style filter: `cargo test -- <substring>` runs matching criteria only.
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [Criterion; 10] = [
        ("kl oracle agreement", kl_oracle),
        ("detection-bound identity", detection_identity),
        ("fbl -> shannon limit", fbl_limit),
        ("structural dominance", structural_dominance),
        ("gradient checks", gradient_checks),
        ("clipping contract", clipping_contract),
        ("fbl training", fbl_training),
        ("ibl ordering", ibl_ordering),
        ("covert-power sanity", covert_power),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let o = run();
        println!("criterion {:>2} [{}] {name}: {}", i + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
