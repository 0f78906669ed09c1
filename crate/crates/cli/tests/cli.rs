use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn rie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rie"))
        .args(args)
        .env_remove("RIE_SEED")
        .output()
        .expect("run rie")
}

fn ok(args: &[&str]) -> Output {
    let out = rie(args);
    assert!(
        out.status.success(),
        "rie {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn read_csv(file: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(file)
        .unwrap()
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn write_csv(file: &Path, rows: &[Vec<f64>]) {
    let text: String = rows
        .iter()
        .map(|r| r.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    fs::write(file, text).unwrap();
}

fn json(file: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(file).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn simulate(dir: &Path, model: &str, samples: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("sim-{seed}"));
    ok(&[
        "simulate",
        "--model",
        model,
        "--samples",
        &samples.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        out.to_str().unwrap(),
    ]);
    out
}

#[test]
fn one_by_two_input_follows_formula() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("x.csv"), "1,-1\n").unwrap();
    ok(&[
        "clean",
        "-i",
        &path(dir.path(), "x.csv"),
        "-o",
        &path(dir.path(), "out"),
    ]);
    let report = json(&dir.path().join("out/report.json"));
    assert_eq!(report["n"], 1);
    assert_eq!(report["T"], 2);
    assert_eq!(report["q"].as_f64(), Some(0.5));
    let eta = 2f64.powf(-0.5);
    assert!((report["eta"].as_f64().unwrap() - eta).abs() < 1e-15);
    // G(1 + i eta) = (1/2) / (i eta), so |1 - q + G|^2 = 1/4 + 1/(4 eta^2).
    let expected = 1.0 / (0.25 + 0.25 / (eta * eta));
    let cleaned = floats(&report["cleaned_eigenvalues"]);
    assert!((cleaned[0] - expected).abs() < 1e-14);
    let matrix = read_csv(&dir.path().join("out/cleaned_covariance.csv"));
    assert!((matrix[0][0] - expected).abs() < 1e-15);
    assert!((report["trace_after"].as_f64().unwrap() - expected).abs() < 1e-14);
    assert_eq!(report["trace_before"].as_f64(), Some(1.0));
}

#[test]
fn equal_rows_give_rank_one_and_zero_cleaned_values() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("x.csv"), "1,2,3,4\n1,2,3,4\n1,2,3,4\n").unwrap();
    ok(&[
        "clean",
        "-i",
        &path(dir.path(), "x.csv"),
        "-o",
        &path(dir.path(), "out"),
    ]);
    let report = json(&dir.path().join("out/report.json"));
    let raw = floats(&report["eigenvalues"]);
    let cleaned = floats(&report["cleaned_eigenvalues"]);
    assert!((raw[0] - 3.0 * 30.0 / 4.0).abs() < 1e-12);
    for k in 1..3 {
        assert!(raw[k].abs() < 1e-12);
        assert!(cleaned[k].abs() < 1e-10, "{}", cleaned[k]);
    }
}

#[test]
fn header_row_is_skipped() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("x.csv"), "a,b\n1,-1\n").unwrap();
    ok(&[
        "clean",
        "-i",
        &path(dir.path(), "x.csv"),
        "-o",
        &path(dir.path(), "out"),
    ]);
    assert_eq!(json(&dir.path().join("out/report.json"))["T"], 2);
}

#[test]
fn cleaning_narrows_the_identity_spectrum() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), "identity:100", 200, 1);
    ok(&["clean", "-i", &path(&sim, "data.csv"), "-o", &path(dir.path(), "out")]);
    let report = json(&dir.path().join("out/report.json"));
    let spread = |v: Vec<f64>| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread(floats(&report["cleaned_eigenvalues"])) < spread(floats(&report["eigenvalues"])));
}

#[test]
fn simulate_clean_round_trip() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), "toeplitz:0.4:12", 30, 2);
    ok(&["clean", "-i", &path(&sim, "data.csv"), "-o", &path(dir.path(), "out")]);

    let x = rie_data(&sim.join("data.csv"));
    let e = rie_core::estimators::empirical_covariance(&x).unwrap();
    let eig = rie_core::eig_sym(&e).unwrap().into_psd().unwrap();
    let cleaned = rie_core::estimators::lp_clean(&eig, 30, 0.5, false).unwrap();
    let expected = rie_core::estimators::assemble(&eig, &cleaned).unwrap();
    let written = rie_data(&dir.path().join("out/cleaned_covariance.csv"));
    let gap = (written - expected.as_matrix()).norm();
    assert!(gap < 1e-9, "{gap}");
}

fn rie_data(file: &Path) -> nalgebra::DMatrix<f64> {
    rie_core::io::read_matrix_csv(file).unwrap()
}

#[test]
fn transpose_flag_gives_identical_report() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), "spiked:6:1:5", 15, 3);
    let rows = read_csv(&sim.join("data.csv"));
    let transposed: Vec<Vec<f64>> = (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect();
    write_csv(&dir.path().join("xt.csv"), &transposed);
    ok(&["clean", "-i", &path(&sim, "data.csv"), "-o", &path(dir.path(), "a")]);
    ok(&[
        "clean",
        "-i",
        &path(dir.path(), "xt.csv"),
        "--transpose",
        "-o",
        &path(dir.path(), "b"),
    ]);
    assert_eq!(
        fs::read(dir.path().join("a/report.json")).unwrap(),
        fs::read(dir.path().join("b/report.json")).unwrap()
    );
}

#[test]
fn centering_matters_only_for_uncentered_data() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.csv"), "1,-1,2,-2\n0.5,0.25,-0.5,-0.25\n").unwrap();
    fs::write(dir.path().join("u.csv"), "3,1,4,2\n0.5,0.25,-0.5,-0.25\n").unwrap();
    for (name, centered) in [("c", true), ("u", false)] {
        let input = path(dir.path(), &format!("{name}.csv"));
        ok(&["clean", "-i", &input, "-o", &path(dir.path(), &format!("{name}-plain"))]);
        ok(&[
            "clean",
            "-i",
            &input,
            "--center",
            "-o",
            &path(dir.path(), &format!("{name}-centered")),
        ]);
        let a = json(&dir.path().join(format!("{name}-plain/report.json")));
        let b = json(&dir.path().join(format!("{name}-centered/report.json")));
        let gap = floats(&a["cleaned_eigenvalues"])
            .iter()
            .zip(floats(&b["cleaned_eigenvalues"]))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if centered {
            assert!(gap < 1e-12, "{gap}");
        } else {
            assert!(gap > 1e-3, "{gap}");
        }
    }
}

#[test]
fn wide_input_warns_but_succeeds() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("x.csv"), "1,2\n3,5\n-1,4\n").unwrap();
    let out = ok(&[
        "clean",
        "-i",
        &path(dir.path(), "x.csv"),
        "-o",
        &path(dir.path(), "out"),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.csv"), "1,2\n3,oops\n").unwrap();
    let out = rie(&[
        "clean",
        "-i",
        &path(dir.path(), "bad.csv"),
        "-o",
        &path(dir.path(), "o"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("column 2"), "{err}");

    let missing = rie(&[
        "clean",
        "-i",
        &path(dir.path(), "nope.csv"),
        "-o",
        &path(dir.path(), "o"),
    ]);
    assert_eq!(missing.status.code(), Some(2));
    let suite = rie(&["verify", "--suite", "everything", "-o", &path(dir.path(), "o")]);
    assert_eq!(suite.status.code(), Some(2));
    let model = rie(&[
        "simulate",
        "--model",
        "toeplitz:1.5:3",
        "-T",
        "4",
        "-o",
        &path(dir.path(), "o"),
    ]);
    assert_eq!(model.status.code(), Some(2));
    let eta = rie(&[
        "spectrum",
        "--model",
        "identity:3",
        "--grid",
        "0:1:3",
        "--eta",
        "0",
        "-o",
        &path(dir.path(), "o"),
    ]);
    assert_eq!(eta.status.code(), Some(2));
    let alpha = rie(&["clean", "-i", &path(dir.path(), "bad.csv"), "--alpha", "1.5"]);
    assert_eq!(alpha.status.code(), Some(2));
}

#[test]
fn simulate_is_replayable_and_builds_sigma() {
    let dir = TempDir::new().unwrap();
    let a = simulate(dir.path(), "identity:2", 3, 9);
    let again = dir.path().join("again");
    ok(&[
        "simulate",
        "-m",
        "identity:2",
        "-T",
        "3",
        "--seed",
        "9",
        "-o",
        again.to_str().unwrap(),
    ]);
    let data = fs::read(a.join("data.csv")).unwrap();
    assert_eq!(data, fs::read(again.join("data.csv")).unwrap());
    assert_eq!(read_csv(&a.join("data.csv")).len(), 2);
    assert_eq!(read_csv(&a.join("data.csv"))[0].len(), 3);

    let t = simulate(dir.path(), "toeplitz:0.5:2", 3, 10);
    assert_eq!(read_csv(&t.join("sigma.csv")), vec![vec![1.0, 0.5], vec![0.5, 1.0]]);

    let s = simulate(dir.path(), "spiked:5:1:4", 3, 11);
    let sigma = rie_data(&s.join("sigma.csv"));
    let eig = rie_core::eig_sym(&rie_core::SymmetricMatrix::from_dense(&sigma).unwrap()).unwrap();
    assert!((eig.values()[0] - 5.0).abs() < 1e-8);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, seed_flag: Option<&str>, env: Option<&str>| -> Vec<u8> {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_rie"));
        cmd.args(["simulate", "-m", "identity:3", "-T", "4", "-o", out.to_str().unwrap()]);
        cmd.env_remove("RIE_SEED");
        if let Some(s) = seed_flag {
            cmd.args(["--seed", s]);
        }
        if let Some(e) = env {
            cmd.env("RIE_SEED", e);
        }
        assert!(cmd.status().unwrap().success());
        fs::read(out.join("data.csv")).unwrap()
    };
    let flag = run("flag", Some("21"), None);
    assert_eq!(flag, run("env", None, Some("21")));
    assert_eq!(flag, run("both", Some("21"), Some("5")));
    assert_ne!(flag, run("other", None, Some("5")));
}

#[test]
fn lorentzian_peak_of_single_eigenvalue() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("x.csv"), "1\n").unwrap();
    ok(&[
        "spectrum",
        "-i",
        &path(dir.path(), "x.csv"),
        "--grid",
        "1:1:1",
        "--eta",
        "0.01",
        "-o",
        &path(dir.path(), "out"),
    ]);
    let rows = read_csv(&dir.path().join("out/density.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], 1.0);
    assert!((rows[0][1] - 1.0 / (std::f64::consts::PI * 0.01)).abs() < 1e-10);
}

#[test]
fn empty_grid_writes_empty_file() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("x.csv"), "1,2\n").unwrap();
    ok(&[
        "spectrum",
        "-i",
        &path(dir.path(), "x.csv"),
        "--grid",
        "0:1:0",
        "-o",
        &path(dir.path(), "out"),
    ]);
    assert_eq!(fs::read(dir.path().join("out/density.csv")).unwrap().len(), 0);
}

#[test]
fn identity_spectrum_stays_in_marchenko_pastur_support() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "spectrum",
        "--model",
        "identity:500",
        "--samples",
        "1000",
        "--seed",
        "12",
        "--grid",
        "0:3:301",
        "-o",
        &path(dir.path(), "out"),
    ]);
    let eta = 1000f64.powf(-0.5);
    let q: f64 = 0.5;
    let (lo, hi) = (
        (1.0 - q.sqrt()).powi(2) - 5.0 * eta,
        (1.0 + q.sqrt()).powi(2) + 5.0 * eta,
    );
    let values: Vec<f64> = read_csv(&dir.path().join("out/eigenvalues.csv"))
        .iter()
        .map(|r| r[0])
        .collect();
    assert_eq!(values.len(), 500);
    let inside = values.iter().filter(|&&v| v >= lo && v <= hi).count();
    assert!(inside as f64 >= 0.99 * 500.0, "{inside}");

    // The smoothed density carries mass q (G is normalized by T) and almost
    // none of it outside the widened support.
    let density = read_csv(&dir.path().join("out/density.csv"));
    let mass = |keep: &dyn Fn(f64) -> bool| -> f64 {
        density
            .windows(2)
            .filter(|w| keep(w[0][0]) && keep(w[1][0]))
            .map(|w| 0.5 * (w[1][0] - w[0][0]) * (w[0][1] + w[1][1]))
            .sum()
    };
    let total = mass(&|_| true);
    let outside = total - mass(&|x| x >= lo && x <= hi);
    assert!((total - q).abs() < 0.05, "{total}");
    assert!(outside < 0.05 * total, "{outside}");
}

#[test]
fn identities_suite_passes() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "verify",
        "--suite",
        "identities",
        "--seed",
        "4",
        "-o",
        &path(dir.path(), "out"),
    ]);
    let summary = json(&dir.path().join("out/summary.json"));
    assert_eq!(summary["pass"], true);
    let worst = summary["suites"][0]["details"]["max_identity_residual"]
        .as_f64()
        .unwrap();
    assert!(worst < 1e-12);
    let lines = fs::read_to_string(dir.path().join("out/trials.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 100);
    for line in lines.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["suite"], "identities");
    }
}

#[test]
fn stein_suite_passes_in_three_dimensions() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "verify",
        "--suite",
        "stein",
        "--seed",
        "5",
        "-o",
        &path(dir.path(), "out"),
    ]);
    let summary = json(&dir.path().join("out/summary.json"));
    assert_eq!(summary["pass"], true);
    let lines = fs::read_to_string(dir.path().join("out/trials.jsonl")).unwrap();
    assert!(lines.lines().any(|l| l.contains("\"dim\":3")));
}

#[test]
fn failed_verification_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let out = rie(&[
        "verify",
        "--suite",
        "theorem1",
        "--model",
        "identity:4",
        "--trials",
        "5",
        "-o",
        &path(dir.path(), "out"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&dir.path().join("out/summary.json"))["pass"], false);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, jobs: &str| -> (Vec<u8>, Vec<u8>) {
        let out = dir.path().join(name);
        ok(&[
            "verify",
            "--suite",
            "all",
            "--model",
            "toeplitz:0.5:16",
            "--trials",
            "40",
            "--seed",
            "6",
            "--jobs",
            jobs,
            "-o",
            out.to_str().unwrap(),
        ]);
        (
            fs::read(out.join("trials.jsonl")).unwrap(),
            fs::read(out.join("summary.json")).unwrap(),
        )
    };
    let first = run("a", "2");
    assert_eq!(first, run("b", "2"));
    assert_eq!(first, run("c", "1"));
}
