use std::fs;
use std::process::Command;

fn mumimo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mumimo"))
}

#[test]
fn optimal_k_prints_known_value() {
    let out = mumimo().args(["optimal-k", "--alpha", "0.5", "--coherence", "200", "--snr", "1"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("K_opt=100"));
}

#[test]
fn optimal_k_table_covers_alpha_grid() {
    let out = mumimo().args(["optimal-k", "--snr", "1000000"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(text.contains("alpha=0.2000") && text.contains("K_opt=40"));
}

#[test]
fn missing_spec_file_exits_one() {
    let out = mumimo().args(["sweep", "/definitely/not/here.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("here.json"));
}

#[test]
fn unknown_subcommand_exits_one_with_usage() {
    let out = mumimo().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn invalid_spec_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"name":"x","sweep":"K","values":[4],"fixed":{"rho0_db":10},"fading":{"mode":"uniform","d":1},"designs":[]}"#,
    )
    .unwrap();
    let out = mumimo().arg("sweep").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("designs"));
}

#[test]
fn selftest_passes() {
    let out = mumimo().arg("selftest").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn sweep_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"name":"small","sweep":"rho0_db","values":[30,40],
            "fixed":{"n_antennas":8,"n_users":6,"coherence":20},
            "fading":{"mode":"scenario","radius":100},
            "designs":["upper","lower","random_pilot"],"alpha_step":4}"#,
    )
    .unwrap();
    let base = dir.path().join("out/result");
    let out = mumimo()
        .arg("sweep")
        .arg(&spec)
        .args(["--trials", "40", "--seed", "5", "--out"])
        .arg(&base)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(base.with_extension("csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("swept,design,rate,ci,alpha_opt,active_users"));
    assert_eq!(lines.count(), 6);
    let rows = mumimo::harness::parse_json(&fs::read_to_string(base.with_extension("json")).unwrap()).unwrap();
    assert_eq!(mumimo::harness::parse_csv(&csv).unwrap(), rows);

    // same seed, same bytes
    let again = mumimo().arg("sweep").arg(&spec).args(["--trials", "40", "--seed", "5"]).output().unwrap();
    assert_eq!(String::from_utf8(again.stdout).unwrap(), csv);
}

#[test]
fn pilot_subcommand_emits_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("pilot.json");
    fs::write(
        &spec,
        r#"{"kind":"orthogonal",
            "config":{"n_antennas":4,"n_users":2,"coherence":10,"alpha":0.3,"p0":1.0,"n0":0.1},
            "fading":{"d":[1.0,0.5]},
            "power":{"gamma":[1.0,1.0],"gamma_prime":[1.0,1.0],"active":[true,true]}}"#,
    )
    .unwrap();
    let out = mumimo().arg("pilot").arg(&spec).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let xp: mumimo::PilotMatrix = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((xp.users(), xp.symbols()), (2, 3));
}

#[test]
fn asymptotic_check_reports_each_alpha() {
    let out = mumimo()
        .args(["asymptotic-check", "--antennas", "40", "--coherence", "80", "--trials", "300", "--tolerance", "0.05"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 10);
}
