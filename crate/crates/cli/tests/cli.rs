use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hotpotato"))
}

#[test]
fn run_writes_outputs_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--seed", "7", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("seed=7"));
    assert!(stdout.contains("verdict=pass"));
    for f in [
        "summary.txt",
        "engine.log",
        "trace.log",
        "beacons.bin",
        "metrics/device_0.csv",
        "logs/device_0.log",
    ] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
}

#[test]
fn run_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let st = bin()
            .args(["run", "--scenario", "outdoor", "--seed", "3", "--out-dir"])
            .arg(d.path())
            .status()
            .unwrap();
        assert!(st.success());
    }
    for f in [
        "summary.txt",
        "engine.log",
        "metrics/device_4.csv",
        "logs/device_4.log",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn crash_scenario_file_reports_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("crash.toml");
    std::fs::write(
        &sc,
        "seed = 11\n[[crashes]]\ndevice = 2\nat_ms = 60000\nreboot = true\n",
    )
    .unwrap();
    let out = bin()
        .args(["run", "--scenario"])
        .arg(&sc)
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("crashes=1"));
    assert!(stdout.contains("recovery device=2 crashed_at_ms=60000 rebooted_at_ms=63000"));
}

#[test]
fn validate_accepts_presets_and_rejects_bad_files() {
    let ok = bin().args(["validate", "indoor-room"]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("10x15"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[players]\ncount = 1\n").unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("players.count"));

    std::fs::write(&bad, "[players]\ncuont = 3\n").unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn sweep_prints_one_row_per_cell() {
    let out = bin()
        .args([
            "sweep",
            "--param",
            "game.p0=0.01,0.02,0.04",
            "--reps",
            "20",
            "--duration-cap",
            "300",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("game.p0,runs,median_duration_s"));
    for r in &rows[1..] {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols[1], "20");
        assert!(cols[2].parse::<f64>().is_ok());
    }
}

#[test]
fn sweep_rejects_zero_reps() {
    let out = bin()
        .args(["sweep", "--param", "game.p0=0.1", "--reps", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn merge_logs_rebuilds_engine_log() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["run", "--seed", "5", "--out-dir"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(st.success());
    let logs: Vec<_> = (0..10)
        .map(|i| dir.path().join(format!("logs/device_{i}.log")))
        .collect();
    let merged = dir.path().join("merged.log");
    let out = bin()
        .arg("merge-logs")
        .args(&logs)
        .arg("--out")
        .arg(&merged)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        std::fs::read_to_string(&merged).unwrap(),
        std::fs::read_to_string(dir.path().join("engine.log")).unwrap()
    );
}
