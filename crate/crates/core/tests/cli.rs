use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_linkflow"))
}

fn reference() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/table1.cfg")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn thresholds_prints_formula_and_reference() {
    let o = bin().arg("thresholds").arg(reference()).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("c2* = 12.5000000"), "{s}");
    assert!(s.contains("c1* = 8.48546"), "{s}");
    assert!(s.contains("8.30690000"), "{s}");
    assert!(s.contains("c3* = 19.3068528"), "{s}");
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .arg("run")
        .arg(reference())
        .arg("--out")
        .arg(dir.path())
        .arg("--duration")
        .arg("40")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trajectory.csv", "monitors.csv", "report.txt"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let monitors = std::fs::read_to_string(dir.path().join("monitors.csv")).unwrap();
    assert!(monitors.starts_with("t,min_sep,min_speed,max_speed,min_wall_dist,V_p,V_b,V_k,H\n"));
    assert_eq!(monitors.lines().count(), 4002);
}

#[test]
fn run_exits_one_on_violation() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(reference())
        .unwrap()
        .replace("count = 6\n", "vehicles = [{ q = [100.0, 0.0, 0.0], qdot = [30.0, 0.0, 0.0] }]\n");
    let cfg = dir.path().join("fast.cfg");
    std::fs::write(&cfg, text).unwrap();
    let o = bin()
        .args(["run", cfg.to_str().unwrap(), "--duration", "1", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn check_reports_non_parallel_velocity() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(reference())
        .unwrap()
        .replace("v_hat = [10.0, 0.0, 0.0]", "v_hat = [0.0, 10.0, 0.0]");
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, text).unwrap();
    let o = bin().arg("check").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("velocity-not-parallel"));

    let o = bin().arg("check").arg(reference()).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = bin().arg("fly").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = bin().arg("check").arg("/nonexistent.cfg").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn planning_commands() {
    let o = bin().arg("admit-plan").arg(reference()).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("m_max") && s.contains("min period"), "{s}");

    let o = bin().arg("lambda").arg(reference()).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("lambda_hat"));

    let o = bin().arg("verify-rate").arg(reference()).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("bound holds        = true"));
}
