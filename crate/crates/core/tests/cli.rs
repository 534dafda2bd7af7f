use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ismsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ismsim"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ISMSIM_WORKERS")
        .output()
        .expect("binary runs")
}

const CONFIG: &str = r#"
[[scenario]]
name = "ism"
scheme = "ism"
num_tx = 4
num_rx = 4
num_active = 2
mod_order = 4
snr_db = [2.0, 6.0, 10.0]
min_bit_errors = 100
seed = 9

[[scenario]]
name = "sm"
scheme = "sm"
num_tx = 4
num_rx = 4
mod_order = 16
snr_db = [2.0, 6.0, 10.0]
min_bit_errors = 100
seed = 9
"#;

#[test]
fn simulate_gain_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), CONFIG).unwrap();

    let out = ismsim(&["simulate", "s.toml", "--out", "one", "--no-timing", "--workers", "1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read(dir.path().join("one/ism.csv")).unwrap();
    assert!(dir.path().join("one/sm.manifest.json").exists());

    let out = ismsim(&["simulate", "s.toml", "--scenario", "ism", "--out", "two", "--no-timing", "--workers", "3"], dir.path());
    assert!(out.status.success());
    assert_eq!(fs::read(dir.path().join("two/ism.csv")).unwrap(), csv);
    assert!(!dir.path().join("two/sm.csv").exists());

    let out = ismsim(&["rerun", "one/ism.manifest.json", "--out", "three"], dir.path());
    assert!(out.status.success());
    assert_eq!(fs::read(dir.path().join("three/ism.csv")).unwrap(), csv);

    let out = ismsim(&["gain", "--curve-a", "one/ism.csv", "--curve-b", "one/sm.csv", "--ber", "5e-2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let gain: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!(gain.is_finite());
    assert!(out.stderr.is_empty(), "same efficiency should not warn");
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), CONFIG.replace("seed = 9\n\n", "seed = 9\nturbo = true\n\n")).unwrap();
    let out = ismsim(&["simulate", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("turbo") && msg.contains("line"), "{msg}");

    let out = ismsim(&["simulate", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    fs::write(dir.path().join("s.toml"), CONFIG).unwrap();
    let out = ismsim(&["simulate", "s.toml", "--scenario", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let out = ismsim(&["selftest"], Path::new("."));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[PASS]"));
}
