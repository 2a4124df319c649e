use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use speccov::io::{read_matrix, write_matrix, Format};
use speccov::sampling::{sample_gaussian, SpectrumModel};
use speccov::selftest::{run_with, SelftestHooks};

fn speccov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speccov"))
        .env_remove("SPECCOV_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_file(dir: &Path) -> std::path::PathBuf {
    let model = SpectrumModel::block(5, &[0.2, 0.4, 0.4], &[1.0, 3.0, 10.0]).unwrap();
    let x = sample_gaussian(&model, 30, 4).unwrap();
    let path = dir.join("x.csv");
    write_matrix(&path, x.values(), Format::Csv).unwrap();
    path
}

#[test]
fn sample_estimate_of_toy_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("toy.csv");
    fs::write(&input, "1,0\n-1,0\n").unwrap();
    let out = dir.path().join("out");
    let o = speccov(&["estimate", "--input", p(&input), "--method", "sample", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty(), "stdout carries data only with --stdout");
    let m = read_matrix(&out.join("covariance.csv")).unwrap();
    assert_eq!(m.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
    assert_eq!(read_matrix(&out.join("spectrum.csv")).unwrap().as_slice(), &[1.0, 0.0]);
    assert!(out.join("estimate.manifest.json").exists());

    let o = speccov(&["estimate", "--input", p(&input), "--method", "sample", "--out", p(&out), "--stdout"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "# rows=2 cols=2\n1,0\n0,0\n");
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = data_file(dir.path());
    let o = speccov(&["estimate", "--input", p(&input), "--method", "shrinky"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    for id in ["sample", "iso-10f-cvc", "nls-precision"] {
        assert!(e.contains(id), "{e}");
    }
}

#[test]
fn input_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let o = speccov(&["estimate", "--input", p(&missing), "--method", "sample"]);
    assert_eq!(o.status.code(), Some(2));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3,x\n").unwrap();
    let o = speccov(&["estimate", "--input", p(&bad), "--method", "sample"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    let input = data_file(dir.path());
    let o = speccov(&["estimate", "--input", p(&input), "--method", "oracle", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn estimator_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("wide.csv");
    fs::write(&input, "1,2,3\n4,5,6\n").unwrap();
    let o = speccov(&["estimate", "--input", p(&input), "--method", "nls", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn estimates_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = data_file(dir.path());
    let run = |sub: &str, fmt: &str| {
        let out = dir.path().join(sub);
        let o = speccov(&[
            "estimate", "--input", p(&input), "--method", "iso-10f-cvc", "--seed", "7", "--format", fmt, "--out", p(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a", "csv"), run("b", "csv"));
    for f in ["covariance.csv", "spectrum.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = run("c", "bin");
    assert_eq!(read_matrix(&c.join("covariance.bin")).unwrap(), read_matrix(&a.join("covariance.csv")).unwrap());
}

#[test]
fn oracle_with_population_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = data_file(dir.path());
    let model = SpectrumModel::block(5, &[0.2, 0.4, 0.4], &[1.0, 3.0, 10.0]).unwrap();
    let pop = dir.path().join("pop.bin");
    write_matrix(&pop, model.covariance().as_matrix(), Format::Bin).unwrap();
    let o = speccov(&["estimate", "--input", p(&input), "--method", "oracle", "--population", p(&pop), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn minimal_seprial_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"experiment": "seprial", "p_values": [30], "reps": 2, "seed": 1, "estimators": ["sample", "lw", "iso-10f-cvc", "oracle"]}"#;
    let cfg = write_config(dir.path(), "s.json", text);
    let out = dir.path().join("out");
    let o = speccov(&["--threads", "1", "simulate", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("seprial.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "p,n,estimator,reps,seprial,se,seprial_rotated,se_rotated,failures");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("30,90,sample,2,0,0,0,0,0"), "{}", lines[1]);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("seprial.manifest.json")).unwrap()).unwrap();
    for key in ["command", "config_hash", "seed", "version", "started", "finished", "wall_clock_seconds", "outputs"] {
        assert!(manifest.get(key).is_some(), "{key}");
    }
    assert_eq!(manifest["config_hash"], hex::encode(Sha256::digest(text.as_bytes())));
    assert_eq!(manifest["seed"], 1);

    let again = dir.path().join("again");
    let o = speccov(&["--threads", "1", "simulate", "--config", p(&cfg), "--out", p(&again)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(again.join("seprial.csv")).unwrap(), csv.as_bytes());
}

#[test]
fn single_cell_lda_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "l.json",
        r#"{"experiment": "lda", "p": 8, "n": 20, "alphas": [1], "betas": [0.5], "reps": 3, "test_size": 400, "output": "cell.csv"}"#,
    );
    let o = speccov(&["simulate", "--config", p(&cfg), "--out", p(dir.path()), "--stdout"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("cell.csv")).unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), csv);
    assert!(dir.path().join("cell.manifest.json").exists());
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r[0] == "1" && r[1] == "0.5" && r[3] == "3"));
}

#[test]
fn invalid_configs_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    for (text, field) in [
        (r#"{"experiment": "seprial", "reps": 0}"#, "reps"),
        (r#"{"experiment": "lda", "alphas": [-1]}"#, "alpha"),
        (r#"{"experiment": "seprial", "estimators": ["magic"]}"#, "magic"),
        (r#"{"experiment": "runtime", "repz": 3}"#, "repz"),
        (r#"{"reps": 3}"#, "experiment"),
        ("not json", "expected"),
    ] {
        let cfg = write_config(dir.path(), "bad.json", text);
        let o = speccov(&["simulate", "--config", p(&cfg), "--out", p(dir.path())]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(stderr(&o).contains(field), "{text}: {}", stderr(&o));
    }
}

#[test]
fn overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "o.json", r#"{"experiment": "oracle_comparison", "p": 6, "n": 12, "reps": 50}"#);
    let o = speccov(&["simulate", "--config", p(&cfg), "--out", p(dir.path()), "--set", "p=4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("oracle_comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn thread_env_var_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.json", r#"{"experiment": "loo_instability", "p": 4, "n": 30, "reps": 3}"#);
    let o = Command::new(env!("CARGO_BIN_EXE_speccov"))
        .env("SPECCOV_THREADS", "1")
        .args(["simulate", "--config", p(&cfg), "--out", p(dir.path())])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("loo_instability.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["threads"], 1);
}

#[test]
fn selftest_passes_and_reports_json() {
    let o = speccov(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("PASS isotonic.sum_preserved"));
    let o = speccov(&["selftest", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn injected_isotonic_bug_is_reported_by_name() {
    fn no_pooling(v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        out.sort_by(|a, b| b.total_cmp(a));
        out.iter_mut().for_each(|x| *x *= 0.99);
        out
    }
    let report = run_with(&SelftestHooks { isotonic: no_pooling });
    assert!(!report.passed);
    assert!(report.failed().contains(&"isotonic.sum_preserved"), "{}", report.to_text());
    assert!(report.to_text().contains("FAIL isotonic.sum_preserved"));
}

#[test]
fn bench_writes_a_timing_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = speccov(&["bench", "--p", "10,20", "--estimators", "sample,10f-cvc", "--reps", "1", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("runtime.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("p,n,estimator,reps,median_seconds"));
}
