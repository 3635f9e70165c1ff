use std::io::{BufRead, BufReader};
use std::process::{Command, Output, Stdio};

fn sidsense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sidsense")).args(args).output().unwrap()
}

#[test]
fn run_scenario_structured_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = sidsense(&[
            "run-scenario",
            "builtin:outage",
            "--oracle",
            "--format",
            "structured",
            "--report",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["availability"], 1.0);
    assert_eq!(v["violations"], 0);
}

#[test]
fn invalid_script_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[scenario]\nname = \"x\"\nduration_s = -1\n").unwrap();
    assert_eq!(sidsense(&["run-scenario", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(sidsense(&["run-scenario", "builtin:nope"]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_eq!(sidsense(&["run-scenario", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn verify_audit_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.sida");
    let o = sidsense(&["run-scenario", "builtin:nominal", "--oracle", "--audit-log", log.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let ok = sidsense(&["verify-audit", log.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("120 entries"));

    let mut bytes = std::fs::read(&log).unwrap();
    let n = bytes.len();
    bytes[n - 200] ^= 0x01;
    std::fs::write(&log, &bytes).unwrap();
    let bad = sidsense(&["verify-audit", log.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAILED at entry"));

    let wrong_key = "00".repeat(31) + "01";
    let o = sidsense(&["verify-audit", log.to_str().unwrap(), "--public-key", &wrong_key]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn export_copies_log() {
    let dir = tempfile::tempdir().unwrap();
    let export = dir.path().join("shore.sida");
    let o = sidsense(&["run-scenario", "builtin:nominal", "--oracle", "--export", export.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(sidsense(&["verify-audit", export.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn synth_then_scan() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("set.sidq");
    let model = dir.path().join("model.bin");
    assert!(sidsense(&["synth-dataset", data.to_str().unwrap(), "--per-class", "3", "--snr-db", "20"]).status.success());
    assert!(sidsense(&["train", model.to_str().unwrap(), "--per-class", "40"]).status.success());
    let o = sidsense(&["scan", data.to_str().unwrap(), "--model", model.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 12);
    for line in stdout.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["confidence"].as_f64().unwrap() <= 1.0);
    }
    assert!(String::from_utf8_lossy(&o.stderr).contains("accuracy"));
}

#[test]
fn serve_and_administer_wsdb() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wsdb.toml");
    std::fs::write(&cfg, "available = [3, 7]\nreserved = [{ channel = 5, class = \"WirelessMic\" }]\n").unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_sidsense"))
        .args(["serve-wsdb", cfg.to_str().unwrap(), "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().rsplit(' ').next().unwrap().to_string();

    let q = sidsense(&["query", "--addr", &addr]);
    let out = String::from_utf8_lossy(&q.stdout).to_string();
    assert!(q.status.success(), "{}", String::from_utf8_lossy(&q.stderr));
    assert!(out.contains("grant channel 3") && out.contains("grant channel 7"));
    assert!(out.contains("reserved channel 5 for WirelessMic"));

    assert!(sidsense(&["set-availability", "7", "off", "--addr", &addr]).status.success());
    let out = String::from_utf8(sidsense(&["query", "--addr", &addr]).stdout).unwrap();
    assert!(!out.contains("grant channel 7"));

    assert!(sidsense(&["set-outage", "on", "--addr", &addr]).status.success());
    assert!(!sidsense(&["query", "--addr", &addr, "--deadline-ms", "200"]).status.success());
    assert!(sidsense(&["set-outage", "off", "--addr", &addr]).status.success());
    assert!(sidsense(&["set-latency", "0", "--addr", &addr]).status.success());
    assert!(sidsense(&["set-null-ruleset", "on", "--addr", &addr]).status.success());
    assert!(!sidsense(&["query", "--addr", &addr]).status.success());

    child.kill().unwrap();
    child.wait().unwrap();
}

#[test]
fn serve_accepts_scenario_script() {
    let script = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/scenarios/outage.toml");
    let mut child = Command::new(env!("CARGO_BIN_EXE_sidsense"))
        .args(["serve-wsdb", script, "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    assert!(line.starts_with("mock WSDB listening on"), "{line}");
    child.kill().unwrap();
    child.wait().unwrap();
}
