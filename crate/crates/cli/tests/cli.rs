//! End-to-end runs of the `hear` binary.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn hear(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hear")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hear(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn simulate(dir: &Path, seed: &str) {
    let out = dir.to_str().unwrap();
    ok(&["simulate", "--seed", seed, "--subjects", "1", "--rest-trials", "4", "--reach-trials", "6", "--out", out]);
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn simulation_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, "7");
    simulate(&b, "7");
    for name in ["simulation.json", "sub-01/montage.txt", "sub-01/rest.hrec", "sub-01/reach.hrec", "sub-01/events.jsonl"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn calibrate_correct_evaluate() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), "3");
    let sub = tmp.path().join("sub-01");
    let (montage, model) = (path(&sub, "montage.txt"), path(tmp.path(), "model.json"));
    ok(&["calibrate", "--montage", &montage, "--input", &path(&sub, "rest.hrec"), "--out", &model]);

    let clean = path(&sub, "reach_clean.hrec");
    let events = path(&sub, "events.jsonl");
    for mode in ["online", "offline"] {
        let corrected = path(tmp.path(), &format!("{mode}.hrec"));
        let p_art = path(tmp.path(), &format!("{mode}-p.hrec"));
        ok(&[
            "correct", "--model", &model, "--montage", &montage, "--mode", mode, "--input", &path(&sub, "reach.hrec"),
            "--out", &corrected, "--p-art", &p_art,
        ]);
        let metrics = ok(&["evaluate", "--clean", &clean, "--corrected", &corrected, "--events", &events]);
        for key in ["snr_clean_db", "mrcp_peak_uv", "mrcp_peak_latency_s", "outlier_fraction"] {
            assert!(metrics.contains(&format!("metric={key} ")), "{metrics}");
        }
        assert!(metrics.lines().all(|l| l.starts_with("subject=sub-01 algorithm=hear ")));
    }

    // identical inputs give an infinite SNR
    let metrics = ok(&["evaluate", "--clean", &clean, "--corrected", &clean, "--events", &events]);
    assert!(metrics.contains("metric=snr_clean_db value=+inf"), "{metrics}");
}

#[test]
fn detect_lists_flagged_trials() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), "5");
    let input = path(&tmp.path().join("sub-01"), "reach.hrec");
    let lenient = ok(&["detect", "--input", &input, "--amplitude", "1e9"]);
    assert!(lenient.is_empty(), "{lenient}");
    let strict = ok(&["detect", "--input", &input, "--amplitude", "1"]);
    assert_eq!(strict.lines().count(), 6);
    assert!(strict.lines().all(|l| l.starts_with("trial=") && l.contains("amplitude")));
}

#[test]
fn errors_are_reported_with_a_name_and_nonzero_status() {
    let out = hear(&["simulate", "--bogus"]);
    assert!(!out.status.success());

    let out = hear(&["detect", "--input", "/nonexistent/reach.hrec"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: IoError"));
}

#[test]
fn model_for_another_montage_is_refused() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), "2");
    let sub = tmp.path().join("sub-01");
    let (montage, model) = (path(&sub, "montage.txt"), path(tmp.path(), "model.json"));
    ok(&["calibrate", "--montage", &montage, "--input", &path(&sub, "rest.hrec"), "--out", &model]);

    let moved = fs::read_to_string(&montage).unwrap().replacen("Fpz 0.0 ", "Fpz 1.0 ", 1);
    let other = path(tmp.path(), "other.txt");
    fs::write(&other, moved).unwrap();
    let out = hear(&[
        "correct", "--model", &model, "--montage", &other, "--input", &path(&sub, "reach.hrec"), "--out",
        &path(tmp.path(), "x.hrec"),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: FingerprintMismatch"));
}

#[test]
fn stream_mode_corrects_frames_from_stdin() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), "4");
    let sub = tmp.path().join("sub-01");
    let (montage, model) = (path(&sub, "montage.txt"), path(tmp.path(), "model.json"));
    ok(&["calibrate", "--montage", &montage, "--input", &path(&sub, "rest.hrec"), "--out", &model]);

    let frames = 50usize;
    let mut input = b"HEAR".to_vec();
    input.extend(1u32.to_le_bytes());
    input.extend(64u32.to_le_bytes());
    for n in 0..frames * 64 {
        input.extend(((n % 17) as f32 - 8.0).to_le_bytes());
    }
    let side = path(tmp.path(), "side.bin");
    let mut child = Command::new(env!("CARGO_BIN_EXE_hear"))
        .args(["correct", "--model", &model, "--montage", &montage, "--stream", "--side-channel", &side])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&input).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(out.stdout.len(), input.len());
    assert_eq!(out.stdout[..12], input[..12]);
    assert_eq!(fs::read(&side).unwrap().len(), 12 + frames * 2 * 64 * 4);
}
