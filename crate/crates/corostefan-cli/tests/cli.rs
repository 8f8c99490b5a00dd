use std::path::Path;
use std::process::{Command, Output};

fn corostefan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corostefan")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn scenarios_lists_the_six_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = corostefan(&["scenarios"], dir.path());
    assert!(out.status.success());
    let names: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert_eq!(names, ["rest", "stefan1d", "pwave1d", "shear2d", "melt2d", "rotor2d"]);
    for name in &names {
        let check = corostefan(&["check-config", name], dir.path());
        assert!(check.status.success(), "{name}: {}", String::from_utf8_lossy(&check.stderr));
        assert!(stdout(&check).contains("valid"));
    }
}

#[test]
fn rest_runs_ten_steps_with_zero_slack() {
    let dir = tempfile::tempdir().unwrap();
    let out = corostefan(&["run", "--config", "rest", "--steps", "10", "--out", "o", "--strict-audit"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("o");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["completed"], true);
    assert_eq!(report["audit_passed"], true);
    assert_eq!(report["segments"][0]["steps_completed"], 10);
    assert_eq!(report["segments"][0]["audit"]["min_relative_slack"], 0.0);
    let csv = std::fs::read_to_string(o.join("energy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    assert!(o.join("fields_0000.vtk").exists());
}

#[test]
fn a_config_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.toml");
    std::fs::write(
        &path,
        r#"
name = "tiny"

[grid]
cells = [8]
extent = [1.0]
boundary = [{ kind = "wall" }]

[time]
tau = 1.0e-3
steps = 3

[material]
k_e = 4.0

[initial]
theta = { kind = "step", axis = 0, position = 0.5, low = 280.0, high = 260.0 }
"#,
    )
    .unwrap();
    let check = corostefan(&["check-config", path.to_str().unwrap()], dir.path());
    assert!(check.status.success(), "{}", String::from_utf8_lossy(&check.stderr));
    let out = corostefan(&["run", "--config", path.to_str().unwrap(), "--out", "t"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("3/3 steps"));
}

#[test]
fn bad_inputs_exit_with_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = corostefan(&["run", "--config", "no-such-scenario"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("no-such-scenario"));

    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "name = \"bad\"\n[grid]\ncells = [4]\nextent = [1.0, 2.0]\nboundary = [{ kind = \"wall\" }]\n[time]\ntau = 0.1\nsteps = 1\n").unwrap();
    let bad = corostefan(&["check-config", path.to_str().unwrap()], dir.path());
    assert_eq!(bad.status.code(), Some(1));

    let unknown = corostefan(&["check-config", "/dev/null/x.toml"], dir.path());
    assert_eq!(unknown.status.code(), Some(1));
}

#[test]
fn strict_audit_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("strict.toml");
    // Zero conservation tolerance: any rounding in the energy ledger fails the audit.
    std::fs::write(
        &path,
        r#"
name = "strict"

[grid]
cells = [8, 8]
extent = [1.0, 1.0]
boundary = [{ kind = "periodic" }, { kind = "periodic" }]

[time]
tau = 1.0e-3
steps = 2

[initial]
velocity = { kind = "shear", amplitude = 0.1, mode = 1 }
theta = { kind = "uniform", value = 260.0 }

[audit]
strict = true
conserve = 0.0
"#,
    )
    .unwrap();
    let out = corostefan(&["run", "--config", path.to_str().unwrap(), "--out", "s"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("s/report.json").exists());
}
