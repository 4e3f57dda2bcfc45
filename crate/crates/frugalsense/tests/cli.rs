//! End-to-end runs of the binary on a two-week dataset with a small
//! training budget.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use frugalsense::io;
use frugalsense_core::evaluation::{fisher_information, rmse};

const BIN: &str = env!("CARGO_BIN_EXE_frugalsense");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two weeks of data, a fitted kernel and a config tuned for speed.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

const SMALL_CONFIG: &str = r#"{
  "data": {"measurements": "data/measurements.csv", "holidays": "data/holidays.txt"},
  "gp": {"params": "kernel.json", "train_weeks": 1},
  "protocol": {"train_days": [3, 4, 5, 6], "validation_days": [5, 6], "eval_start_day": 7, "eval_days": 2,
               "baseline_budget": 28},
  "ppo": {"total_updates": 6, "checkpoint_every": 2, "rollout_episodes": 4, "hidden_layers": [16, 16]},
  "sweep": {"agents": [{"seed": 0}, {"seed": 1}, {"seed": 2, "lr": 0.001}, {"seed": 3, "clip": 0.1}]}
}"#;

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(&["gen-data", "--weeks", "2", "--seed", "3", "--holidays", "9", "--out", s(&root.join("data"))]);
        ok(&[
            "fit-gp",
            "--data",
            s(&root.join("data/measurements.csv")),
            "--holidays",
            s(&root.join("data/holidays.txt")),
            "--train-weeks",
            "1",
            "--budget",
            "12",
            "--out",
            s(&root.join("kernel.json")),
        ]);
        let config = root.join("config.json");
        std::fs::write(&config, SMALL_CONFIG).unwrap();
        Fixture { _dir: dir, root, config }
    })
}

#[test]
fn gen_data_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["gen-data", "--weeks", "3", "--seed", "7", "--out", s(&a)]);
    ok(&["gen-data", "--weeks", "3", "--seed", "7", "--out", s(&b)]);
    let text = std::fs::read(a.join("measurements.csv")).unwrap();
    assert_eq!(text, std::fs::read(b.join("measurements.csv")).unwrap());
    assert_eq!(String::from_utf8(text).unwrap().lines().count(), 1 + 2016);
    assert_eq!(std::fs::read(a.join("holidays.txt")).unwrap(), std::fs::read(b.join("holidays.txt")).unwrap());
}

#[test]
fn missing_out_is_a_usage_error() {
    let out = run(&["gen-data", "--weeks", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["baseline", "--policy", "best", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_gp_improves_likelihood_and_is_reproducible() {
    let f = fixture();
    let again = f.root.join("kernel_again.json");
    let stdout = ok(&[
        "fit-gp",
        "--data",
        s(&f.root.join("data/measurements.csv")),
        "--holidays",
        s(&f.root.join("data/holidays.txt")),
        "--train-weeks",
        "1",
        "--budget",
        "12",
        "--out",
        s(&again),
    ]);
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(f.root.join("kernel.json")).unwrap());
    let value = |key: &str| -> f64 {
        let line = stdout.lines().find(|l| l.starts_with(&format!("{key} "))).unwrap();
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    assert!(value("log_likelihood") >= value("initial_log_likelihood"));
    let kf = io::load_kernel_params(&again).unwrap();
    assert_eq!(kf.log_likelihood, Some(value("log_likelihood")));

    let out = run(&["fit-gp", "--data", s(&f.root.join("data/measurements.csv")), "--train-weeks", "3", "--out", s(&f.root.join("k3.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("span error"));
}

#[test]
fn baselines_fill_the_comparison_table() {
    let f = fixture();
    let out = f.root.join("baselines");
    for policy in ["uniform", "oracle", "random"] {
        let stdout = ok(&["--config", s(&f.config), "baseline", "--policy", policy, "--seed", "5", "--out", s(&out)]);
        assert!(stdout.contains("fi=") && stdout.contains("rmse="), "{stdout}");
        let sched = io::load_schedule(&out.join(format!("schedule_{policy}.txt"))).unwrap();
        assert_eq!(sched.len(), 28);
    }
    let rows = io::read_reports(&out.join("comparison.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.policy.as_str()).collect::<Vec<_>>(), ["uniform", "oracle", "random"]);
    for r in &rows {
        assert_eq!((r.span_start, r.span_end, r.samples), (672, 864, 28));
        assert!(r.fi > 0.0 && r.rmse >= 0.0);
    }

    let span = ok(&["--config", s(&f.config), "baseline", "--policy", "uniform", "--budget", "4", "--span", "700:796", "--out", s(&out)]);
    assert!(span.contains("samples=4 span=700:796"), "{span}");
}

#[test]
fn train_writes_run_dir_and_resumes_exactly() {
    let f = fixture();
    let full = f.root.join("run_full");
    ok(&["--config", s(&f.config), "train", "--svg", "--out", s(&full)]);
    for name in ["config.json", "kernel_params.json", "learning_curve.csv", "learning_curve.svg", "eval/report.csv", "eval/posterior.csv", "eval/trajectory.csv"] {
        assert!(full.join(name).exists(), "missing {name}");
    }
    for k in [2, 4, 6] {
        assert!(full.join(format!("checkpoints/agent_0_update_{k}.json")).exists());
    }
    io::load_network(&full.join("checkpoints/best.json")).unwrap();
    let curve = io::read_learning_curve(&full.join("learning_curve.csv")).unwrap();
    assert_eq!(curve.len(), 24);
    assert_eq!(curve.last().unwrap().update, 5);

    // Same seed, same bytes.
    let again = f.root.join("run_again");
    ok(&["--config", s(&f.config), "train", "--out", s(&again)]);
    let read = |d: &Path, n: &str| std::fs::read(d.join(n)).unwrap();
    assert_eq!(read(&full, "learning_curve.csv"), read(&again, "learning_curve.csv"));

    // Interrupted between checkpoints, then resumed.
    let split = f.root.join("run_split");
    ok(&["--config", s(&f.config), "train", "--stop-after", "3", "--out", s(&split)]);
    assert!(!split.join("eval/report.csv").exists());
    assert_eq!(io::read_learning_curve(&split.join("learning_curve.csv")).unwrap().len(), 12);
    ok(&["--config", s(&f.config), "train", "--resume", "--out", s(&split)]);
    for name in ["learning_curve.csv", "checkpoints/best.json", "checkpoints/agent_0_update_6.json", "eval/report.csv"] {
        assert_eq!(read(&full, name), read(&split, name), "{name} differs after resume");
    }

    let other_seed = f.root.join("run_seed");
    ok(&["--config", s(&f.config), "--seed", "99", "train", "--out", s(&other_seed)]);
    assert_ne!(read(&full, "learning_curve.csv"), read(&other_seed, "learning_curve.csv"));
}

#[test]
fn eval_dump_recomputes_to_the_report() {
    let f = fixture();
    let run_dir = f.root.join("run_for_eval");
    ok(&["--config", s(&f.config), "train", "--out", s(&run_dir)]);
    let out = f.root.join("eval_out");
    ok(&[
        "--config",
        s(&f.config),
        "eval",
        "--checkpoint",
        s(&run_dir.join("checkpoints/best.json")),
        "--span",
        "672:864",
        "--budget",
        "20",
        "--svg",
        "--out",
        s(&out),
    ]);
    let rows = io::read_posterior(&out.join("posterior.csv")).unwrap();
    assert_eq!(rows.len(), 192);
    assert!(rows.iter().zip(672..).all(|(r, slot)| r.slot == slot));
    let sampled = rows.iter().filter(|r| r.sampled == 1).count();
    assert!(sampled <= 20);
    let report = &io::read_reports(&out.join("report.csv")).unwrap()[0];
    assert_eq!(report.samples, sampled);
    let var: Vec<f64> = rows.iter().map(|r| r.sd * r.sd).collect();
    let mean: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let truth: Vec<f64> = rows.iter().map(|r| r.truth).collect();
    assert!((fisher_information(&var).unwrap() - report.fi).abs() <= 1e-6 * report.fi.max(1.0));
    assert!((rmse(&mean, &truth).unwrap() - report.rmse).abs() <= 1e-6);
    let traj = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("step,slot,action,sampled,battery,reward\n"));
    assert!(out.join("posterior.svg").exists());

    let bad = run(&["--config", s(&f.config), "eval", "--checkpoint", s(&f.root.join("nope.json")), "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn sweep_tabulates_every_agent() {
    let f = fixture();
    let out = f.root.join("sweep");
    let o = Command::new(BIN)
        .args(["--config", s(&f.config), "sweep", "--out", s(&out)])
        .env("FRUGALSENSE_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = io::read_sweep_results(&out.join("sweep_results.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.agent_id).collect::<Vec<_>>(), [0, 1, 2, 3]);
    assert_eq!(rows[2].lr, 0.001);
    assert_eq!(rows[3].clip, 0.1);
    for id in 0..4 {
        assert!(out.join(format!("agent_{id}/checkpoints/agent_{id}_update_6.json")).exists());
    }

    // One thread gives the same table.
    let serial = f.root.join("sweep_serial");
    let o = Command::new(BIN)
        .args(["--config", s(&f.config), "sweep", "--out", s(&serial)])
        .env("FRUGALSENSE_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(out.join("sweep_results.csv")).unwrap(), std::fs::read(serial.join("sweep_results.csv")).unwrap());
}

#[test]
fn config_with_unknown_key_is_rejected() {
    let f = fixture();
    let bad = f.root.join("bad.json");
    std::fs::write(&bad, r#"{"ppo": {"learning_rat": 0.1}}"#).unwrap();
    let out = run(&["--config", s(&bad), "baseline", "--policy", "uniform", "--out", s(&f.root.join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
}
