use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use entropy_gas_lab::report::{Provenance, RunError};
use entropy_gas_lab::*;

const BIN: &str = env!("CARGO_BIN_EXE_entropy-gas-lab");

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("ENTROPY_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn gas(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config(Subcommand::Gas, &ConfigSource::text(text))
}

const SMALL_GAS: &str = "dim=2\nn_particles=30\nbeta=N^2\npotential=quadratic:1\nkernel=log2d:2\nsteps=1500\nburn_in=500\nthin=10\nseed=3\n";

#[test]
fn gas_defaults_are_filled_and_echoed() {
    let c = gas("dim=2\nn_particles=100\nbeta=N^2\npotential=quadratic:1\nkernel=log2d:2\n").unwrap();
    let echo = c.echo();
    assert_eq!(echo["steps"], "100000");
    assert_eq!(echo["burn_in"], "20000");
    assert_eq!(echo["thin"], "100");
    assert_eq!(echo["dt"], "auto");
    assert_eq!(c.real("beta"), 10000.0);
    assert_eq!(echo["beta"], "10000.0");
    assert!(!echo.contains_key("out_dir"));
}

#[test]
fn misspelled_key_gets_a_suggestion() {
    let err = gas("dim=2\nn_particles=100\nbeta=1\npotential=quadratic:1\nklernel=coulomb\n").unwrap_err();
    assert!(err.0.contains("unknown key klernel; did you mean kernel"), "{}", err.0);
}

#[test]
fn all_missing_keys_are_listed_together() {
    let err = gas("dim=2\n").unwrap_err();
    assert!(err.0.contains("missing required keys: n_particles, beta, potential, kernel"), "{}", err.0);
}

#[test]
fn type_mismatch_names_the_key() {
    let err = gas("dim=two\nn_particles=100\nbeta=1\npotential=quadratic:1\nkernel=coulomb\n").unwrap_err();
    assert!(err.0.contains("key dim expects a non-negative integer"), "{}", err.0);
    let err = gas("dim=2\nn_particles=100\nbeta=1\npotential=cubic:1\nkernel=coulomb\n").unwrap_err();
    assert!(err.0.contains("potential"), "{}", err.0);
    let err = gas("dim=2\nn_particles=100\nbeta=1\npotential=quadratic:1\nkernel=coulomb\nsteps=10\nburn_in=20\n").unwrap_err();
    assert!(err.0.contains("burn_in"), "{}", err.0);
}

#[test]
fn presets_parse_and_check_their_subcommand() {
    for p in presets::PRESETS {
        let c = parse_config(p.subcommand, &ConfigSource::preset(p.name)).unwrap();
        assert_eq!(c.preset.as_deref(), Some(p.name));
    }
    let c = parse_config(Subcommand::Gas, &ConfigSource::preset("coulomb-ball-3d")).unwrap();
    assert_eq!(c.real("beta"), 125000.0);
    let err = parse_config(Subcommand::Gas, &ConfigSource::preset("mm-infinity-free-energy")).unwrap_err();
    assert!(err.0.contains("markov"));
    assert!(parse_config(Subcommand::Gas, &ConfigSource::preset("nope")).is_err());
}

fn sample_summary(metrics: BTreeMap<String, Metric>) -> Summary {
    Summary {
        subcommand: "gas".into(),
        status: Status::Fail,
        error: Some(RunError {
            class: "numeric".into(),
            message: "quoted \"text\"".into(),
        }),
        metrics,
        warnings: vec!["w".into()],
        artifacts: vec!["a.csv".into()],
        provenance: Provenance {
            seed: u64::MAX,
            preset: None,
            config: BTreeMap::from([("beta".to_string(), "10000.0".to_string())]),
            artifact_version: "1".into(),
        },
    }
}

#[test]
fn summary_round_trips() {
    let empty = sample_summary(BTreeMap::new());
    let text = empty.render();
    assert!(text.contains("\"metrics\": {}"));
    assert_eq!(Summary::parse(&text).unwrap(), empty);

    let mut metrics = BTreeMap::new();
    let checks = [
        Check::AtMost(0.1),
        Check::AtLeast(-1e-300),
        Check::Above(0.0),
        Check::Near { target: 0.75, tol: 0.05 },
        Check::Relative { target: 1.0 / 3.0, tol: 0.05 },
        Check::Between { lo: 0.1, hi: 0.95 },
    ];
    for (i, check) in checks.into_iter().enumerate() {
        let value = std::f64::consts::PI * 10f64.powi(i as i32 - 3);
        metrics.insert(format!("m{i}"), Metric { value, check, pass: check.passes(value) });
    }
    metrics.insert("inf".into(), Metric { value: f64::INFINITY, check: Check::AtMost(1.0), pass: false });
    let full = sample_summary(metrics);
    let text = full.render();
    assert!(text.contains("\"value\": 3.1415926535897931e"), "{text}");
    assert_eq!(Summary::parse(&text).unwrap(), full);
}

#[test]
fn reports_overwrite_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let mut bundle = ReportBundle {
        summary: sample_summary(BTreeMap::new()),
        files: vec![("x.csv".into(), "a\n".into())],
    };
    write_report(&bundle, dir.path()).unwrap();
    bundle.files[0].1 = "b\n".into();
    let paths = write_report(&bundle, dir.path()).unwrap();
    assert_eq!(paths.last().unwrap().file_name().unwrap(), "summary.json");
    assert_eq!(fs::read_to_string(dir.path().join("x.csv")).unwrap(), "b\n");
    let names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().all(|n| !n.ends_with(".tmp")), "{names:?}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("free.conf"), "max_order=5\n").unwrap();
    fs::write(d.join("strict.conf"), "gap_tol=1e-6\n").unwrap();
    fs::write(d.join("bad.conf"), "degrees=4\nklernel=1\n").unwrap();
    fs::write(d.join("reducible.txt"), "kind=kernel\nS=2\n1 0\n0.5 0.5\n").unwrap();
    fs::write(d.join("markov.conf"), "chain=file:reducible.txt\n").unwrap();

    assert_eq!(run(&["free", "--config", "free.conf", "--out", "ok"], d).status.code(), Some(0));
    assert_eq!(run(&["free", "--config", "strict.conf", "--out", "strict"], d).status.code(), Some(1));
    let bad = run(&["free", "--config", "bad.conf", "--out", "bad"], d);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("klernel"));
    assert_eq!(run(&["free", "--out", "x"], d).status.code(), Some(2));
    assert_eq!(run(&["free", "--config", "missing.conf"], d).status.code(), Some(2));

    let failed = run(&["markov", "--config", "markov.conf", "--out", "m"], d);
    assert_eq!(failed.status.code(), Some(3));
    let summary = Summary::parse(&fs::read_to_string(d.join("m/summary.json")).unwrap()).unwrap();
    assert_eq!(summary.status, Status::Failed);
    assert_eq!(summary.error.unwrap().class, "structural");

    fs::write(d.join("blocker"), "").unwrap();
    assert_eq!(run(&["free", "--config", "free.conf", "--out", "blocker/sub"], d).status.code(), Some(3));

    let threads = Command::new(BIN)
        .args(["free", "--config", "free.conf", "--out", "t"])
        .current_dir(d)
        .env("ENTROPY_LAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn nothing_is_written_outside_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("g.conf"), SMALL_GAS).unwrap();
    let out = run(&["gas", "--config", "g.conf", "--out", "res"], d);
    assert!(out.status.code().unwrap() <= 1, "{}", String::from_utf8_lossy(&out.stderr));
    let mut top: Vec<String> = fs::read_dir(d)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["g.conf", "res"]);
    let summary = Summary::parse(&fs::read_to_string(d.join("res/summary.json")).unwrap()).unwrap();
    for key in ["radial_ks", "m2_radial", "rate_function_trace", "rate_function", "acceptance_rate"] {
        assert!(summary.metrics.contains_key(key), "{key} missing");
    }
    for name in ["energy_trace.csv", "snapshot_final.txt", "radial_histogram.csv"] {
        assert!(d.join("res").join(name).exists(), "{name}");
    }
    let trace = fs::read_to_string(d.join("res/energy_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1501);
}

#[test]
fn same_seed_gives_identical_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("g.conf"), SMALL_GAS).unwrap();
    for out in ["a", "b"] {
        run(&["gas", "--config", "g.conf", "--out", out], d);
    }
    run(&["gas", "--config", "g.conf", "--out", "c", "--seed", "4"], d);
    let read = |o: &str| fs::read(d.join(o).join("summary.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    assert_eq!(fs::read(d.join("a/energy_trace.csv")).unwrap(), fs::read(d.join("b/energy_trace.csv")).unwrap());

    let parallel = Command::new(BIN)
        .args(["gas", "--config", "g.conf", "--out", "p"])
        .current_dir(d)
        .env("ENTROPY_LAB_THREADS", "2")
        .output()
        .unwrap();
    assert!(parallel.status.code().unwrap() <= 1);
}

#[test]
fn markov_preset_emits_a_monotone_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["markov", "--preset", "mm-infinity-free-energy", "--out", "m"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(dir.path().join("m/free_energy.csv")).unwrap();
    let values: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 41);
    assert!(values.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn free_sweep_gap_shrinks_with_degree() {
    let config = parse_config(Subcommand::Free, &ConfigSource::text("degrees=64,4,16,8,32\n")).unwrap();
    let bundle = run_experiment(&config);
    assert_eq!(bundle.exit_code(), 0);
    let (_, csv) = bundle.files.iter().find(|(n, _)| n == "free_clt.csv").unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("d,m,scaled_moment,catalan,gap"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    for m in 1..=5 {
        let gaps: Vec<f64> = rows.iter().filter(|r| r[1] == m as f64).map(|r| r[4]).collect();
        assert_eq!(gaps.len(), 5);
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "m={m}: {gaps:?}");
    }
}

#[test]
fn clt_run_reports_the_monotone_entropy_sequence() {
    let config = parse_config(Subcommand::Clt, &ConfigSource::text("start=uniform\ndx=1/256\n")).unwrap();
    let bundle = run_experiment(&config);
    assert_eq!(bundle.summary.status, Status::Pass);
    assert!(bundle.summary.metrics["min_entropy_increment"].value > 0.0);
    let err = parse_config(Subcommand::Clt, &ConfigSource::text("start=cauchy\n")).unwrap_err();
    assert!(err.0.contains("start"));
}
