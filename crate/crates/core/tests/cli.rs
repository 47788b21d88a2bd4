//! CLI contract tests: exit codes, config-file merging, and flag precedence.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entroflow"))
}

#[test]
fn unknown_subcommand_exits_one() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_exits_one() {
    let out = bin().args(["detect", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn missing_trace_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "detect",
            "--trace",
            "/nonexistent/trace.csv",
            "--th1",
            "0.5",
            "--out",
        ])
        .arg(dir.path().join("v.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_supplies_flags_and_cli_wins() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let gen = bin()
        .args(["generate", "--seed", "5", "--duration", "12", "--rate", "100", "--out"])
        .arg(&trace)
        .output()
        .unwrap();
    assert_eq!(gen.status.code(), Some(0));

    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"window-seconds": 1.0, "features": ["src-addr"], "th1": 0.9, "th2": 0.1}"#,
    )
    .unwrap();

    // th1 from the file applies.
    let out = bin()
        .args(["detect", "--trace"])
        .arg(&trace)
        .args(["--config"])
        .arg(&config)
        .args(["--out"])
        .arg(dir.path().join("v1.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    // A CLI flag overrides the file value; an invalid override must be the
    // one that wins and gets rejected.
    let out = bin()
        .args(["detect", "--trace"])
        .arg(&trace)
        .args(["--config"])
        .arg(&config)
        .args(["--th1", "1.5", "--out"])
        .arg(dir.path().join("v2.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("th1"));

    // Unknown config-file keys are rejected.
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"threshold": 0.5}"#).unwrap();
    let out = bin()
        .args(["detect", "--trace"])
        .arg(&trace)
        .args(["--config"])
        .arg(&bad)
        .args(["--out"])
        .arg(dir.path().join("v3.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = bin()
            .args(["generate", "--seed", "77", "--duration", "10", "--rate", "50", "--out"])
            .arg(path)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
