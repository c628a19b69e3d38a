use std::fs;
use std::process::Command;

fn netlab() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_netlab"));
    cmd.env_remove("NETLAB_SEED");
    cmd
}

#[test]
fn run_wifi_smudp_writes_five_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.csv");
    let status = netlab()
        .args([
            "run",
            "--scenario",
            "wifi",
            "--protocols",
            "smudp",
            "--seed",
            "42",
            "--reps",
            "5",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "scenario,protocol,sweep_param,sweep_value,file_size_bytes,mean_ms,rep1_ms,rep2_ms,rep3_ms,rep4_ms,rep5_ms,failures"
    );
    assert_eq!(lines.len(), 6);
    let sizes: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(sizes, ["50", "100", "250", "500", "1000"]);
    assert!(lines[1..]
        .iter()
        .all(|l| l.starts_with("wifi,smudp,file_size_kib,") && l.ends_with(",0")));
}

#[test]
fn unknown_scenario_exits_one() {
    let out = netlab().args(["run", "--scenario", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("wifi") && err.contains("bandwidth"), "{err}");
}

#[test]
fn usage_error_exits_one_and_help_exits_zero() {
    assert_eq!(netlab().arg("frobnicate").output().unwrap().status.code(), Some(1));
    assert_eq!(netlab().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn env_seed_is_the_default() {
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = netlab();
        cmd.args(["run", "--scenario", "loss", "--protocols", "quic", "--reps", "1"]);
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        if let Some(s) = env {
            cmd.env("NETLAB_SEED", s);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run(None, None), run(None, Some("42")));
    assert_eq!(run(Some("7"), None), run(None, Some("7")));
    assert_ne!(run(Some("7"), None), run(None, None));
    let bad = netlab()
        .args(["run", "--scenario", "wifi"])
        .env("NETLAB_SEED", "x")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn matrix_twice_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let status = netlab()
            .args(["matrix", "--all", "--seed", "42", "--reps", "1", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "2g.csv",
            "3g.csv",
            "bandwidth.csv",
            "loss.csv",
            "lte.csv",
            "rtt.csv",
            "wifi.csv"
        ]
    );
    let mut rows = 0;
    for n in &names {
        let x = fs::read(a.join(n)).unwrap();
        assert_eq!(x, fs::read(b.join(n)).unwrap(), "{n}");
        rows += String::from_utf8(x).unwrap().lines().count() - 1;
    }
    assert_eq!(rows, 114);
}
