use std::process::Command;

fn orality(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_orality"))
        .args(args)
        .env_remove("ORALITY_CHAT_API_KEY")
        .output()
        .unwrap()
}

#[test]
fn help_lists_every_flag() {
    let out = orality(&["--help"]);
    assert!(out.status.success());
    let help = String::from_utf8(out.stdout).unwrap();
    for flag in [
        "--port",
        "--session-dir",
        "--export-dir",
        "--mock-providers",
        "--layout-tau",
        "--radial-radius",
        "--step-max",
        "--iterations",
        "--force-gain",
        "--min-separation",
        "--canvas-extent",
        "--conflict-floor",
        "--log-level",
    ] {
        assert!(help.contains(flag), "missing {flag}");
    }
}

#[test]
fn invalid_configuration_exits_nonzero() {
    let out = orality(&["--layout-tau", "2", "--mock-providers"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("layout"));

    let out = orality(&["--port", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ORALITY_CHAT_API_KEY"));

    assert!(!orality(&["--conflict-floor", "0"]).status.success());
}
