use std::path::Path;
use std::process::{Command, Output};

fn qsb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsb"))
        .args(args)
        .env("QSB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["qst-game", "--rounds", "0"],
        vec!["ml-run", "--qubits", "2", "--dim", "8"],
        vec!["ops-game", "--eta", "1.5"],
        vec!["validate"],
        vec!["ml-run", "--dim", "3", "--povm", "pauli-basis"],
    ] {
        let mut args = args.clone();
        let out = dir.path().join("x");
        args.extend(["--out", path(&out)]);
        let o = qsb(&args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert_eq!(qsb(&["no-such-mode"]).status.code(), Some(2));
}

#[test]
fn failed_validation_exits_1_after_reporting() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.json");
    // trace 1 but an eigenvalue of -0.5
    std::fs::write(
        &input,
        r#"{"dim": 2, "entries": [[1.5, 0.0], [0.0, 0.0], [0.0, 0.0], [-0.5, 0.0]]}"#,
    )
    .unwrap();
    let out = dir.path().join("v");
    let o = qsb(&["validate", "--input", path(&input), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let report = read(&out.join("validate.csv"));
    assert!(report.contains("density,unit_trace,"));
    assert!(report
        .lines()
        .any(|l| l.starts_with("density,psd,") && l.ends_with(",false")));
}

#[test]
fn validate_accepts_generated_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("ml");
    let o = qsb(&[
        "ml-run",
        "--qubits",
        "1",
        "--shots",
        "50",
        "--rounds",
        "100",
        "--out",
        path(&run),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("v");
    let o = qsb(&[
        "validate",
        "--input",
        path(&run.join("dataset.json")),
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read(&out.join("validate.csv"));
    // count, dimension, provenance + five checks per matrix
    assert_eq!(report.lines().count(), 1 + 3 + 5 * 50);
    assert!(report.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn manifest_reproduces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = qsb(&[
        "qst-game",
        "--dim",
        "3",
        "--rounds",
        "120",
        "--seeds",
        "3,8",
        "--out",
        path(&first),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&first.join("manifest.json"))).unwrap();
    assert_eq!(
        manifest["rng"].as_str().unwrap().split(' ').next(),
        Some("ChaCha20Rng")
    );
    assert_eq!(manifest["seeds"], serde_json::json!([3, 8]));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);

    let second = dir.path().join("second");
    let o = qsb(&[
        "qst-game",
        "--config",
        path(&first.join("manifest.json")),
        "--out",
        path(&second),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let again: serde_json::Value =
        serde_json::from_str(&read(&second.join("manifest.json"))).unwrap();
    assert_eq!(manifest["config_hash"], again["config_hash"]);
    for name in manifest["artifacts"].as_array().unwrap() {
        let name = name.as_str().unwrap();
        assert_eq!(read(&first.join(name)), read(&second.join(name)), "{name}");
    }

    // a manifest of another mode is rejected
    let o = qsb(&[
        "ml-run",
        "--config",
        path(&first.join("manifest.json")),
        "--out",
        path(&second),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn toml_config_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        "mode = \"ops-game\"\ndim = [3]\nrounds = 50\nseeds = [1, 2]\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = qsb(&[
        "ops-game",
        "--config",
        path(&config),
        "--rounds",
        "40",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out.join("ops_seed2.csv"));
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("round,loss,cum_loss,comparator_loss,regret,bound")
    );
    assert_eq!(lines.count(), 40);
    assert!(out.join("ops_seed1.csv").exists());
}

#[test]
fn checkpoint_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let none = dir.path().join("none");
    let o = qsb(&[
        "ml-run",
        "--qubits",
        "1",
        "--shots",
        "30",
        "--rounds",
        "64",
        "--checkpoints",
        "none",
        "--out",
        path(&none),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        read(&none.join("ml_seed0.csv")),
        "checkpoint,t,f_rho_bar,bound,gap_to_oracle\n"
    );

    let geo = dir.path().join("geo");
    let o = qsb(&[
        "ml-run",
        "--qubits",
        "1",
        "--shots",
        "30",
        "--rounds",
        "64",
        "--out",
        path(&geo),
    ]);
    assert!(o.status.success());
    let ts: Vec<String> = read(&geo.join("ml_mean.csv"))
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(ts, ["1", "2", "4", "8", "16", "32", "64"]);
}

#[test]
fn transcripts_have_one_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("returns.json");
    std::fs::write(
        &input,
        r#"{"dim": 2, "returns": [[1.0, 0.5], [0.5, 1.0], [2.0, 1.0]]}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = qsb(&[
        "ops-game",
        "--dim",
        "2",
        "--input",
        path(&input),
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out.join("ops_seed0.csv"));
    assert_eq!(csv.lines().count(), 4);
    let first: Vec<f64> = csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .skip(1)
        .take(1)
        .map(|x| x.parse().unwrap())
        .collect();
    // uniform first portfolio: −log(0.75)
    assert!((first[0] + 0.75f64.ln()).abs() < 1e-15);
}
