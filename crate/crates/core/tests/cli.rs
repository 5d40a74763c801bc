use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_scenetone"));
    c.env("RUST_LOG", "warn");
    c
}

fn images() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/images");
    ["night_street.jpg", "beach_day.jpg", "forest_morning.jpg"]
        .iter()
        .map(|n| dir.join(n))
        .collect()
}

fn compose(dir: &Path, name: &str, extra: &[&str]) -> (Output, Vec<u8>) {
    let out = dir.join(format!("{name}.wav"));
    let log = dir.join(format!("{name}.jsonl"));
    let mut c = bin();
    c.arg("compose").arg("--images").args(images());
    c.args(["--instruments", "keys,guitar", "--zero-latency"]);
    c.arg("--out").arg(&out).arg("--log").arg(&log).args(extra);
    let output = c.output().unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    (output, std::fs::read(out).unwrap())
}

#[test]
fn compose_is_deterministic_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let (first, a) = compose(dir.path(), "a", &["--auto-mix", "--master"]);
    let (_, b) = compose(dir.path(), "b", &["--auto-mix", "--master"]);
    assert_eq!(Sha256::digest(&a), Sha256::digest(&b));
    let stdout = String::from_utf8(first.stdout).unwrap();
    assert!(stdout.contains(&hex::encode(Sha256::digest(&a))));
    assert_eq!(stdout.matches("capture to loop").count(), 4);

    let replayed = dir.path().join("r.wav");
    let status = bin()
        .arg("render")
        .arg("--log")
        .arg(dir.path().join("a.jsonl"))
        .arg("-o")
        .arg(&replayed)
        .output()
        .unwrap();
    assert!(status.status.success());
    assert_eq!(std::fs::read(replayed).unwrap(), a);
}

#[test]
fn compose_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    compose(dir.path(), "r", &["--report", report.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(report).unwrap()).unwrap();
    assert_eq!(v["sections"].as_array().unwrap().len(), 3);
    assert!((v["costs"]["total"].as_f64().unwrap() - 3.0 * 0.142).abs() < 1e-9);
}

#[test]
fn compose_rejects_bad_instruments() {
    let out = bin()
        .arg("compose")
        .arg("--images")
        .args(images())
        .args(["--instruments", "keys,guitar,bass,percussion"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("between 1 and 3"));
}

#[test]
fn simulate_device_debounces_a_script() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("s.txt");
    std::fs::write(
        &script,
        "# keys press with bounce, then a display update\n\
         R 0 1 10\nR 0 0 12\nR 0 1 14\nR 0 0 200\n\
         H 250 D 90 verse 3 01 ambient chill\n\
         R 4 1 400\nR 4 0 470\n",
    )
    .unwrap();
    let out = bin().arg("simulate-device").arg(&script).output().unwrap();
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "B 0 d 14\nB 0 u 200\nA\nB 4 d 400\nB 4 u 470\n"
    );
    std::fs::write(&script, "X 1 2\n").unwrap();
    let bad = bin().arg("simulate-device").arg(&script).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 1"));
}
