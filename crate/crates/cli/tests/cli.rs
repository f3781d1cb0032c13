use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nss-ortho"))
        .args(args)
        .env_remove("NSS_ORTHO_THREADS")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

// Noiseless baseline curve on the 12-tenor grid, in percent.
fn baseline_curve_csv(dir: &Path) -> std::path::PathBuf {
    let grid = nss_ortho::MaturityGrid::us_treasury_12();
    let p = nss_ortho::NssParams::new([0.04, -0.02, 0.015, 0.008], [0.6, 0.2]).unwrap();
    let y = nss_ortho::nss::curve_eval(&p, &grid).unwrap();
    let mut text = String::from("tenor,yield\n");
    for (label, v) in nss_ortho::nss::US_TREASURY_12.iter().zip(y.iter()) {
        text.push_str(&format!("{label},{}\n", v * 100.0));
    }
    let path = dir.join("curve.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn help_and_bad_flags() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["table1", "--help"]).status.code(), Some(0));
    assert_eq!(run(&["--no-such-flag", "table1"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn fit_noiseless_curve() {
    let dir = tempfile::tempdir().unwrap();
    let input = baseline_curve_csv(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out.join("fit.json"));
    let h = v["fit"]["objective"].as_f64().unwrap();
    assert!(h <= 1e-16, "H = {h:e}");
    assert!(out.join("config.json").is_file() && out.join("metadata.json").is_file());

    let out_ns = dir.path().join("ns");
    let o = run(&[
        "fit",
        "--model",
        "ns",
        "--input",
        input.to_str().unwrap(),
        "--output-dir",
        out_ns.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&out_ns.join("fit.json"))["fit"]["inner"]["p"].as_u64(), Some(3));
}

#[test]
fn malformed_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "tenor,yield\n1Y,abc\n").unwrap();
    let o = run(&[
        "fit",
        "--input",
        bad.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let missing = dir.path().join("missing.csv");
    let o = run(&["treasury", "--input", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["table1", "--sigma", "-1", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn table1_has_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["table1", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(data_rows(&dir.path().join("table1.csv")), 4);
}

#[test]
fn changepoint_path_has_kmax_plus_one_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("date,a,b\n");
    for i in 0..40 {
        let step = if i >= 20 { 3.0 } else { 0.0 };
        text.push_str(&format!(
            "2020-{:02}-01,{},{}\n",
            1 + i % 12,
            step + (i as f64 * 0.7).sin(),
            step
        ));
    }
    let input = dir.path().join("series.csv");
    std::fs::write(&input, text).unwrap();
    let o = run(&[
        "changepoint",
        "--kmax",
        "12",
        "--input",
        input.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&dir.path().join("changepoint.csv")), 13);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = || {
        let o = run(&[
            "treasury",
            "--synthetic-days",
            "80",
            "--seed",
            "5",
            "--output-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let mut files: Vec<(std::ffi::OsString, Vec<u8>)> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap())
            .filter(|e| e.file_name() != "metadata.json")
            .map(|e| (e.file_name(), std::fs::read(e.path()).unwrap()))
            .collect();
        files.sort();
        files
    };
    let first = snapshot();
    let second = snapshot();
    assert!(first.len() > 5);
    for ((n, x), (_, y)) in first.iter().zip(&second) {
        assert!(x == y, "{n:?} differs");
    }
}

#[test]
fn thread_setting_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_nss-ortho"))
        .args(["gram", "--output-dir", dir.path().to_str().unwrap()])
        .env("NSS_ORTHO_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_nss-ortho"))
        .args(["gram", "--output-dir", dir.path().to_str().unwrap()])
        .env("NSS_ORTHO_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}
