use std::path::Path;
use std::process::Command;

use odwda_cli::config::ExperimentConfig;
use odwda_cli::{simulate, sweep};
use odwda_core::{project, LossOracle, StepSchedule};

fn odwda(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_odwda")).args(args).output().unwrap()
}

fn small_args(out: &Path) -> Vec<String> {
    ["--agents", "12", "--graph", "erdos_renyi:0.4", "--horizon", "60", "--seed", "3", "--out"]
        .iter()
        .map(|s| s.to_string())
        .chain([out.display().to_string()])
        .collect()
}

fn run(args: &[String]) -> std::process::Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    odwda(&refs)
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn config_file(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = config_file(dir.path(), "[run]\nhorizn = 10\n");
    assert_eq!(odwda(&["run", "--config", &bad_key]).status.code(), Some(2));
    assert_eq!(odwda(&["run", "--preset", "fig9"]).status.code(), Some(2));
    assert_eq!(odwda(&["run", "--agents", "0"]).status.code(), Some(2));
    assert_eq!(odwda(&["sweep", "--axis", "seed", "--values", "1"]).status.code(), Some(2));
    assert_eq!(odwda(&["bounds", "--agents", "10", "--burn-in", "0"]).status.code(), Some(2));
    assert_eq!(odwda(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_abort_exits_with_three_and_marks_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run".to_string()];
    args.extend(small_args(dir.path()));
    args.extend(["--beta".into(), "0".into()]);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = read(dir.path().join("trace.csv"));
    assert!(trace.lines().last().unwrap().starts_with("aborted,"));
    let meta: toml::Table = read(dir.path().join("meta.toml")).parse().unwrap();
    assert_eq!(meta["results"]["completed"].as_bool(), Some(false));
}

#[test]
fn run_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run".to_string()];
    args.extend(small_args(dir.path()));
    args.extend(["--dump-matrices".into(), "--dump-weights".into(), "--decisions".into()]);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let trace = read(dir.path().join("trace.csv"));
    let mut lines = trace.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,agent,regret_ind,regret_avg,bound_thm4,bound_corollary,deviation,deviation_bound"));
    assert!(header.ends_with(",x_1,x_tilde_1"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 60 * 12);
    assert_eq!(rows[0][0..2], ["1", "1"]);

    // Final cumulative regrets in the summary are the last trace rows.
    let summary = read(dir.path().join("summary.csv"));
    for (k, line) in summary.lines().skip(1).enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        let last = &rows[59 * 12 + k];
        assert_eq!(cols[0], last[1]);
        assert_eq!(cols[2], last[2]);
        assert_eq!(cols[3], last[3]);
    }

    assert!(dir.path().join("matrices/P_60.csv").exists());
    let weights = read(dir.path().join("weights.csv"));
    assert!(weights.starts_with("t,agent,neighbor,q\n"));

    let meta: toml::Table = read(dir.path().join("meta.toml")).parse().unwrap();
    let cfg: ExperimentConfig = meta["config"].clone().try_into().unwrap();
    assert_eq!(cfg.run.n, 12);
    assert_eq!(cfg.run.seed, 3);
    assert!(meta["meta"]["version"].as_str().is_some());
    assert_eq!(meta["results"]["rounds"].as_integer(), Some(60));
}

#[test]
fn uniform_weights_when_adaptation_is_off() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run".to_string()];
    args.extend(small_args(dir.path()));
    args.extend(["--dump-weights".into(), "--no-adaptive".into()]);
    assert!(run(&args).status.success());
    let weights = read(dir.path().join("weights.csv"));
    let mut per_row: std::collections::BTreeMap<(u32, u32), Vec<f64>> = Default::default();
    for line in weights.lines().skip(1) {
        let c: Vec<&str> = line.split(',').collect();
        per_row.entry((c[0].parse().unwrap(), c[1].parse().unwrap())).or_default().push(c[3].parse().unwrap());
    }
    assert_eq!(per_row.len(), 60 * 12);
    for q in per_row.values() {
        let w = 1.0 / q.len() as f64;
        assert!(q.iter().all(|v| (v - w).abs() < 1e-15));
    }
}

#[test]
fn single_value_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let sweep_dir = dir.path().join("sweep");
    let mut a = vec!["run".to_string()];
    a.extend(small_args(&run_dir));
    assert!(run(&a).status.success());
    let mut s = vec!["sweep".to_string(), "--axis".into(), "beta".into(), "--values".into(), "0.9".into()];
    s.extend(small_args(&sweep_dir));
    let out = run(&s);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cell = sweep_dir.join(sweep::cell_dir(sweep::Axis::Beta, "0.9"));
    assert_eq!(read(run_dir.join("trace.csv")), read(cell.join("trace.csv")));
    let combined = read(sweep_dir.join("sweep.csv"));
    assert!(combined.starts_with(sweep::SWEEP_COLUMNS));
    assert_eq!(combined.lines().count(), 61);
}

#[test]
fn preset_sweep_runs_every_noise_family() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = vec!["sweep".to_string(), "--preset".into(), "fig4".into()];
    s.extend(small_args(dir.path()));
    assert!(run(&s).status.success());
    let combined = read(dir.path().join("sweep.csv"));
    for family in ["gaussian", "uniform", "laplace"] {
        assert_eq!(combined.lines().filter(|l| l.starts_with(&format!("noise_family,{family},"))).count(), 60);
        assert!(dir.path().join(format!("noise_family_{family}/trace.csv")).exists());
    }
}

#[test]
fn graph_stats_and_bounds_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = odwda(&[
        "graph-stats",
        "--agents",
        "10",
        "--families",
        "path,complete",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = read(dir.path().join("graph_stats.csv"));
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][0], "path");
    assert_eq!(rows[1][0], "complete");
    assert_eq!(rows[1][6], "1");

    let out = odwda(&["bounds", "--gamma", "0.2034", "--nu", "5", "--horizon", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(&format!("{key} = "))).unwrap();
        line.split(" = ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap()
    };
    assert!((value("coefficient") - 39.2244).abs() < 1e-3);
    assert_eq!(value("regret_bound"), 2.0 * value("coefficient"));
}

#[test]
fn single_agent_run_is_centralized_dual_averaging() {
    let mut cfg = ExperimentConfig::default();
    cfg.run.n = 1;
    cfg.run.horizon = 300;
    cfg.graph.family = "path".into();
    let r = simulate(&cfg).unwrap();
    let chi = cfg.scenario.params().unwrap().feasible_set().unwrap();
    let step = StepSchedule::new(cfg.run.k).unwrap();
    let (mut y, mut x) = (vec![0.0], vec![0.0]);
    for t in 1..=r.rounds {
        assert_eq!(r.decision(t, 0), x.as_slice(), "round {t}");
        let g = r.oracle.subgradient(t, 0, &x);
        y[0] += g[0];
        x = project(&y, step.alpha(t), &chi).unwrap();
    }
    assert!(r.deviation.unwrap().iter().all(|&d| d == 0.0));
}
