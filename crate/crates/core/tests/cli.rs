use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::process::{Command, Output, Stdio};

fn mpqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpqkd")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn plob_prints_the_bound() {
    let o = mpqkd(&["plob", "--loss-db", "40.92"]);
    assert!(o.status.success());
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v / 1.1673e-4 - 1.0).abs() < 5e-5, "{v}");
    assert_eq!(mpqkd(&["plob", "--loss-db", "-1"]).status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.txt");
    fs::write(&cfg, "alice.mu = 0.01\nalice.nu = 0.05\n").unwrap();
    let o = mpqkd(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("intensity ordering"));
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = mpqkd(&["estimate", "--tallies", "x.json", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn estimate_reads_tallies_and_flags_failure() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.json");
    fs::write(&t, mpqkd::presets::Link::Km303.tallies().to_json()).unwrap();
    let o = mpqkd(&["estimate", "--tallies", t.to_str().unwrap(), "--preset", "303"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let n11 = v["finite_key"]["n11_z_lower"].as_f64().unwrap();
    assert!((n11 / 29808789.0 - 1.0).abs() < 0.05, "{n11}");

    fs::write(&t, mpqkd::siftmap::TallyTable::default().to_json()).unwrap();
    let o = mpqkd(&["estimate", "--tallies", t.to_str().unwrap(), "--preset", "202"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_then_replay_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = mpqkd(&[
        "simulate", "--preset", "202", "--seed", "5", "--blocks", "2", "--n-rounds", "5000000", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.txt", "report.json", "manifest.json", "tallies.json", "block_00000.mpqk", "block_00001.ref"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let o = mpqkd(&["replay", "--records", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), fs::read_to_string(out.join("report.json")).unwrap());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n_rounds_accumulated"], 10_000_000);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn pair_reads_indices() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_mpqkd"))
        .args(["pair", "--l-max", "1"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"1\n2\n3\n4\n9\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    assert_eq!(stdout(&o), "1,2\n3,4\n");
}

#[test]
fn freqest_finds_the_beat() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bins.csv");
    let mut text = String::from("count\n");
    for i in 0..20_000 {
        let v = 5.0 + 4.0 * (TAU * 34e6 * i as f64 * 1e-9).cos();
        text.push_str(&format!("{}\n", v.round()));
    }
    fs::write(&path, text).unwrap();
    let o = mpqkd(&["freqest", "--bins", path.to_str().unwrap(), "--window-us", "10", "--pad", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<String> = stdout(&o).lines().skip(1).map(str::to_owned).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let f: f64 = r.split(',').nth(1).unwrap().parse().unwrap();
        assert!((f - 34e6).abs() <= 50e3, "{f}");
    }
}
