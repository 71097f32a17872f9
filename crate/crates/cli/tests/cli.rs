use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
name = "small"
[sim]
n = 16
lambda = [0.0]
eps = [0.4]
t_list = [0.25, 0.5]
s_ladder = [2]
[ensemble]
n_replicas = 64
seed = 7
"#;

fn acnoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acnoise"))
        .args(args)
        .env_remove("ACNOISE_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run(args: &[&str]) -> Output {
    let out = acnoise(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\n{}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

#[test]
fn simulate_at_zero_coupling_is_pure_heat_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = run(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS pure_heat@t=0.5"));
    run(&["simulate", "--config", &cfg, "--out", b.to_str().unwrap()]);
    for f in ["stats.csv", "observables.csv", "snapshot_002.bin", "report.json"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&read(&a, "manifest.json")).unwrap();
    assert_eq!(manifest["files"].as_array().unwrap().len(), 7);
    assert!(manifest["verdicts"].as_array().unwrap().iter().all(|v| v["pass"] == true));
}

#[test]
fn simulate_rejects_ladders() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &SMALL.replace("lambda = [0.0]", "lambda = [0.0, 1.0]"));
    let out = acnoise(&["simulate", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let typo = write_config(tmp.path(), "typo.toml", "[sim]\nlamda = [1.0]\n");
    assert_eq!(acnoise(&["ensemble", "--config", &typo]).status.code(), Some(2));
    let unresolved = write_config(tmp.path(), "eps.toml", &SMALL.replace("eps = [0.4]", "eps = [0.1]"));
    let out = acnoise(&["ensemble", "--config", &unresolved]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eps = 0.1"));
    let missing = tmp.path().join("nope.toml");
    assert_eq!(acnoise(&["verify", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn ensemble_is_worker_invariant_and_gaussian_at_zero_coupling() {
    let tmp = tempfile::tempdir().unwrap();
    // High standardized moments need a realistic ensemble.
    let cfg = write_config(tmp.path(), "c.toml", &SMALL.replace("n_replicas = 64", "n_replicas = 2048"));
    let (one, three) = (tmp.path().join("w1"), tmp.path().join("w3"));
    let out = run(&["ensemble", "--config", &cfg, "--out", one.to_str().unwrap(), "--suite", "gaussianity"]);
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    run(&["ensemble", "--config", &cfg, "--out", three.to_str().unwrap(), "--suite", "gaussianity", "--workers", "3"]);
    for f in ["stats.csv", "checks.csv", "report.json", "accumulator_00_00.json"] {
        assert_eq!(read(&one, f), read(&three, f), "{f}");
    }
    let stats = String::from_utf8(read(&one, "stats.csv")).unwrap();
    assert!(stats.starts_with("lambda,eps,t,statistic,value,se\n"));
    assert!(stats.contains("sigma_sq@s=2"));
}

#[test]
fn workers_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let dir = tmp.path().join("env");
    let out = Command::new(env!("CARGO_BIN_EXE_acnoise"))
        .args(["ensemble", "--config", &cfg, "--out", dir.to_str().unwrap()])
        .env("ACNOISE_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn pairing_se(dir: &Path) -> f64 {
    let bytes = read(dir, "stats.csv");
    let mut rdr = csv::Reader::from_reader(&bytes[..]);
    rdr.records()
        .map(|r| r.unwrap())
        .find(|r| &r[2] == "0.5" && &r[3] == "pairing_mean")
        .map(|r| r[5].parse().unwrap())
        .unwrap()
}

#[test]
fn doubling_replicas_shrinks_error_bars() {
    let tmp = tempfile::tempdir().unwrap();
    let small = write_config(tmp.path(), "a.toml", &SMALL.replace("n_replicas = 64", "n_replicas = 512"));
    let large = write_config(tmp.path(), "b.toml", &SMALL.replace("n_replicas = 64", "n_replicas = 1024"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&["ensemble", "--config", &small, "--out", a.to_str().unwrap()]);
    run(&["ensemble", "--config", &large, "--out", b.to_str().unwrap()]);
    let ratio = pairing_se(&a) / pairing_se(&b);
    assert!((1.0..2.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn verify_suites() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("v");
    let out = run(&["verify", "--suite", "deterministic", "--out", dir.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("suite deterministic PASS"));
    let verdicts: serde_json::Value = serde_json::from_slice(&read(&dir, "verdicts.json")).unwrap();
    assert_eq!(verdicts[0]["pass"], true);

    let out = acnoise(&["verify", "--suite", "gausianity", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for known in ["deterministic", "clt-desk", "gaussianity", "coming-down", "calibration"] {
        assert!(err.contains(known), "{err}");
    }
}

#[test]
fn verify_calibration_needs_zero_coupling() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &SMALL.replace("lambda = [0.0]", "lambda = [1.0]"));
    let out = acnoise(&["verify", "--config", &cfg, "--suite", "calibration", "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_needs_a_manifest_and_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(acnoise(&["report", empty.to_str().unwrap()]).status.code(), Some(2));

    let cfg = write_config(tmp.path(), "c.toml", &SMALL.replace("lambda = [0.0]", "lambda = [0.0, 0.5, 2.0]"));
    let runs = tmp.path().join("runs");
    run(&["ensemble", "--config", &cfg, "--out", runs.to_str().unwrap()]);
    let (r1, r2) = (tmp.path().join("r1"), tmp.path().join("r2"));
    run(&["report", runs.to_str().unwrap(), "--out", r1.to_str().unwrap()]);
    run(&["report", runs.to_str().unwrap(), "--out", r2.to_str().unwrap()]);
    for f in ["tidy.csv", "sigma_lambda.csv", "summary.txt"] {
        assert_eq!(read(&r1, f), read(&r2, f), "{f}");
    }
    let bytes = read(&r1, "sigma_lambda.csv");
    let mut rdr = csv::Reader::from_reader(&bytes[..]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[4].parse::<f64>().unwrap() > 0.0));

    fs::remove_file(runs.join("manifest.json")).unwrap();
    assert_eq!(acnoise(&["report", runs.to_str().unwrap()]).status.code(), Some(2));
}
