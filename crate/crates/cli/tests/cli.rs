use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_covert-rsma"));
    c.env_remove("COVERT_RSMA_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.conf");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = "episodes = 3\nepisode_len = 20\nseeds = 1, 2\n";

#[test]
fn selftest_passes() {
    let out = run(&["selftest"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().count() >= 10);
    assert!(!text.contains("FAIL"));
}

#[test]
fn sweep_epsilon_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut outputs = Vec::new();
    for run_dir in ["a", "b"] {
        let out_dir = dir.path().join(run_dir);
        let out = run(&[
            "sweep-epsilon",
            "--config",
            &cfg,
            "--out",
            out_dir.to_str().unwrap(),
            "--grid",
            "0.05,0.2",
            "--workers",
            "2",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(out_dir.join("series.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "scheme,regime,sweep_value,seed,episode,avg_min_rate,avg_sum_rate,covert_violation_rate,qos_violation_rate,mean_kl,mean_radiated_power"
    );
    // 4 schemes × 2 regimes × 2 points × 2 seeds × 3 episodes
    assert_eq!(text.lines().count(), 1 + 4 * 2 * 2 * 2 * 3);
    assert!(!text.contains("NaN"));
}

#[test]
fn train_eval_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("train");
    let out = run(&[
        "train",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--scheme",
        "P-RSMA,G-SDMA",
        "--regime",
        "IBL",
        "--seeds",
        "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = out_dir.join("checkpoints").join("P-RSMA_IBL_20_5.json");
    assert!(ckpt.exists());
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);

    let eval_csv = dir.path().join("eval.csv");
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--episodes",
        "2",
        "--out",
        eval_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&eval_csv).unwrap().lines().count(), 3);

    let plots = dir.path().join("plots");
    let out = run(&[
        "plot",
        out_dir.join("series.csv").to_str().unwrap(),
        "--out",
        plots.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(plots.join("series_min_rate.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn seed_env_overrides_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("o");
    let out = bin()
        .args(["train", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--scheme", "G-RSMA", "--regime", "FBL"])
        .env("COVERT_RSMA_SEED", "77")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let seeds: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(seeds, ["77", "78"]);
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (text, key) in [("epsilon = banana\n", "epsilon"), ("colour = blue\n", "colour")] {
        let cfg = write_config(dir.path(), text);
        let out = run(&["train", "--config", &cfg, "--out", dir.path().join("x").to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2));
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(key), "{err}");
    }
    let out = run(&["train", "--config", "/nonexistent/run.conf"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(
        &empty,
        "scheme,regime,sweep_value,seed,episode,avg_min_rate,avg_sum_rate,covert_violation_rate,qos_violation_rate,mean_kl,mean_radiated_power\n",
    )
    .unwrap();
    let plots = dir.path().join("plots");
    let out = run(&["plot", empty.to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!plots.exists());

    let wrong = dir.path().join("wrong.csv");
    std::fs::write(&wrong, "scheme,regime,value\nP-RSMA,FBL,1\n").unwrap();
    let out = run(&["plot", wrong.to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep_value"));
}
