use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const FIXED_PI_2: &str = "1.5707963267948966";

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ramsey-probe"));
    cmd.env_remove("RAMSEY_PROBE_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn all_ones_for_a_silent_drive_at_zero_phase() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "c.json",
        r#"{"measurement": {"n_outcomes": 16, "repetitions": 1, "phi_r": 0.0}, "modulation": {"amplitude": 0.0}}"#,
    );
    let out = dir.path().join("o.rprb");
    ok(&["simulate", "--config", s(&config), "--out", s(&out)]);
    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(bytes.len(), 16 + 2);
    assert_eq!(&bytes[..4], b"RPRB");
    assert_eq!(&bytes[16..], &[0xff, 0xff]);
}

#[test]
fn default_payload_size_and_manifest_digest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.json", r#"{"measurement": {"repetitions": 3}}"#);
    let out = dir.path().join("o.rprb");
    ok(&["simulate", "--config", s(&config), "--out", s(&out), "--seed", "11"]);
    let size = std::fs::metadata(&out).unwrap().len();
    assert_eq!(size, 16 + 3 * 100_000 / 8);

    let manifest = read_json(&dir.path().join("o.rprb.manifest.json"));
    assert_eq!(manifest["master_seed"], 11);
    assert_eq!(manifest["repetitions"], 3);
    assert_eq!(manifest["outputs"][0]["bytes"], size);
    let digest = ramsey_probe_cli::format::sha256_file(&out).unwrap();
    assert_eq!(manifest["outputs"][0]["sha256"], digest.as_str());
    let record: ramsey_probe_cli::manifest::RunManifest = serde_json::from_value(manifest).unwrap();
    assert!(ramsey_probe_cli::manifest::verify(&record, dir.path()).unwrap().is_empty());
}

#[test]
fn same_seed_gives_identical_digests_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "c.json",
        r#"{"measurement": {"n_outcomes": 4096, "repetitions": 9, "phi_r": 0.7},
            "noise": {"tls": [{"coupling": 0.3, "rate_01": 0.01, "rate_10": 0.02}],
                      "modulation_frequency": {"kind": "white", "intensity": 1e-5}},
            "execution": {"seed": 3}}"#,
    );
    let a = dir.path().join("a.rprb");
    let b = dir.path().join("b.rprb");
    ok(&["simulate", "--config", s(&config), "--out", s(&a), "--parallel", "1"]);
    let out = bin()
        .args(["simulate", "--config", s(&config), "--out", s(&b)])
        .env("RAMSEY_PROBE_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    let digest = |p: &Path| ramsey_probe_cli::format::sha256_file(p).unwrap();
    assert_eq!(digest(&a), digest(&b));
    let manifest = read_json(&dir.path().join("b.rprb.manifest.json"));
    assert_eq!(manifest["threads"], 3);
}

#[test]
fn round_trip_fit_brackets_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "c.json",
        &format!(r#"{{"measurement": {{"phi_r": {FIXED_PI_2}, "repetitions": 40}}, "execution": {{"seed": 21}}}}"#),
    );
    let outcomes = dir.path().join("o.rprb");
    let spectrum = dir.path().join("s.csv");
    let report = dir.path().join("fit.json");
    ok(&["simulate", "--config", s(&config), "--out", s(&outcomes)]);
    let out = ok(&["spectrum", "--in", s(&outcomes), "--out", s(&spectrum), "--parseval"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("parseval"));
    let text = std::fs::read_to_string(&spectrum).unwrap();
    assert_eq!(text.lines().next(), Some("m,S"));
    assert_eq!(text.lines().count(), 100_001);
    let sidecar = read_json(&dir.path().join("s.csv.json"));
    assert_eq!(sidecar["n"], 100_000);
    assert_eq!(sidecar["repetitions"], 40);
    assert!(sidecar["parseval_max_relative_error"].as_f64().unwrap() < 1e-9);

    ok(&["fit", "--spectrum", s(&spectrum), "--config", s(&config), "--report", s(&report)]);
    let fit = read_json(&report);
    assert_eq!(fit["model"], "resonant");
    assert_eq!(fit["peak_bin"], 48);
    let omega = &fit["omega_bounds"];
    assert!(omega[0].as_f64().unwrap() < 1e-3 && 1e-3 < omega[1].as_f64().unwrap());
    let a_true = 2.0 * (0.5e-3f64).sin() / 1e-3;
    let amp = &fit["amplitude_bounds"];
    assert!(amp[0].as_f64().unwrap() < a_true && a_true < amp[1].as_f64().unwrap());
    assert_eq!(fit["points_used"].as_array().unwrap().len(), 8);
}

#[test]
fn all_zero_file_gives_an_all_zero_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.rprb");
    let mut bytes = ramsey_probe_cli::format::header(20).to_vec();
    bytes.extend_from_slice(&[0u8; 6]);
    std::fs::write(&path, bytes).unwrap();
    let csv = dir.path().join("z.csv");
    ok(&["spectrum", "--in", s(&path), "--out", s(&csv), "--parseval"]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 20);
    for (m, row) in rows.iter().enumerate() {
        let (bin, value) = row.split_once(',').unwrap();
        assert_eq!(bin.parse::<usize>().unwrap(), m);
        assert_eq!(value.parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn predict_emits_requested_components() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "c.json",
        r#"{"measurement": {"n_outcomes": 4000, "phi_r": 0.7853981633974483},
            "noise": {"modulation_frequency": {"kind": "white", "intensity": 25e-6}}}"#,
    );
    let out = dir.path().join("p.csv");
    ok(&["predict", "--config", s(&config), "--components", "lorentzian,white", "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("m,peaks,white,total"));
    assert_eq!(lines.count(), 4000);

    let plain = dir.path().join("q.csv");
    ok(&["predict", "--config", s(&config), "--out", s(&plain)]);
    assert!(std::fs::read_to_string(&plain).unwrap().starts_with("m,peaks,background,white,total\n"));
}

#[test]
fn scan_has_zero_first_column_and_linear_resonance() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "c.json",
        r#"{"measurement": {"n_outcomes": 20000, "repetitions": 1, "phi_r": 0.7853981633974483}}"#,
    );
    let outcomes = dir.path().join("o.rprb");
    ok(&["simulate", "--config", s(&config), "--out", s(&outcomes)]);
    let out = dir.path().join("y.csv");
    ok(&[
        "scan-yft", "--in", s(&outcomes), "--nu-grid", "0.95,1,1.05", "--relative-to", s(&config), "--m-steps", "4",
        "--out", s(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 15);
    for row in rows.iter().filter(|r| r[1] == 0.0) {
        assert_eq!(row[2], 0.0);
    }
    let resonant: Vec<f64> = rows.iter().filter(|r| (r[0] - 3e-3).abs() < 1e-12).map(|r| r[2]).collect();
    assert_eq!(resonant.len(), 5);
    assert!(resonant.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"measurement": {"t_ramsy": 1}}"#);
    let out = run(&["simulate", "--config", s(&bad), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("measurement.t_ramsy"), "{stderr}");

    let invalid = write(dir.path(), "inv.json", r#"{"modulation": {"omega": -1}}"#);
    let out = run(&["simulate", "--config", s(&invalid), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["spectrum", "--in", s(&dir.path().join("missing")), "--out", s(&dir.path().join("y"))]);
    assert_eq!(out.status.code(), Some(1));

    let garbage = write(dir.path(), "g.rprb", "not an outcome file");
    let out = run(&["spectrum", "--in", s(&garbage), "--out", s(&dir.path().join("y"))]);
    assert_eq!(out.status.code(), Some(1));

    // A flat spectrum has no peak to fit.
    let flat = write(dir.path(), "flat.csv", &(0..64).fold("m,S\n".to_string(), |acc, m| acc + &format!("{m},1\n")));
    let good = write(dir.path(), "good.json", "{}");
    let out = run(&["fit", "--spectrum", s(&flat), "--config", s(&good)]);
    assert_eq!(out.status.code(), Some(3));

    let out = bin()
        .args(["simulate", "--config", s(&good), "--out", s(&dir.path().join("x"))])
        .env("RAMSEY_PROBE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
