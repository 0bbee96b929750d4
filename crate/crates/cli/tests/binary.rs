use std::process::Command;

fn cbilab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cbilab"));
    c.env("CBILAB_THREADS", "2");
    c
}

#[test]
fn list_prints_presets() {
    let out = cbilab().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().next().unwrap().starts_with("cir-check"));
    assert!(text.contains("cbire-w1"));
}

#[test]
fn run_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = cbilab()
        .args(["run", "cir-w1", "--paths", "400", "--horizon", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("cir-w1.csv")).unwrap();
    assert!(csv.starts_with("t,estimate,stderr,theoretical_bound\n"));
    assert_eq!(csv.lines().count(), 9);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cir-w1.json")).unwrap())
            .unwrap();
    assert_eq!(json["kind"], "w1-decay");
    assert_eq!(json["master_seed"], 2024);
}

#[test]
fn toml_file_runs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flow.toml");
    let s = cbilab_cli::catalog::find("cir-flow").unwrap();
    std::fs::write(&path, s.to_toml().unwrap()).unwrap();
    let go = || cbilab().arg("run").arg(&path).output().unwrap();
    let (a, b) = (go(), go());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn refusal_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let mut s = cbilab_cli::catalog::find("cir-w1").unwrap();
    s.model = cbilab::sde::ModelSpec::Cbi(cbilab::mechanisms::CbiParams::diffusion(1.0, -1.0, 1.0));
    std::fs::write(&path, s.to_toml().unwrap()).unwrap();
    let out = cbilab().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: refused:"), "{err}");
    assert!(err.contains("dissipativity"), "{err}");
}

#[test]
fn unknown_scenario_and_wrong_kind_fail() {
    let out = cbilab().args(["run", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = cbilab().args(["fclt", "cir-w1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn json_format_on_stdout() {
    let out = cbilab().args(["flow", "--times", "1,2", "--format", "json"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"], "pass");
}
