use std::fs;
use std::process::{Command, Output};

fn lts(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lts"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix(" = "))
}

#[test]
fn printed_config_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = lts(&["--print-config", "--cells", "64", "--mesh", "polynomial", "--flux", "llf"], &[]);
    assert!(out.status.success());
    let text = stdout(&out);
    let path = dir.path().join("run.toml");
    fs::write(&path, &text).unwrap();
    let again = lts(&["--print-config", "--config", path.to_str().unwrap()], &[]);
    assert_eq!(stdout(&again), text);
    assert_eq!(field(&text, "cells"), Some("64"));
    assert_eq!(field(&text, "flux"), Some("\"llf\""));
}

#[test]
fn flags_beat_environment_beats_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, "cells = 40\nsubmeshes = 4\n").unwrap();
    let p = path.to_str().unwrap();
    let from_file = stdout(&lts(&["--print-config", "--config", p], &[]));
    assert_eq!(field(&from_file, "cells"), Some("40"));
    assert_eq!(field(&from_file, "submeshes"), Some("4"));
    let from_env = stdout(&lts(&["--print-config", "--config", p], &[("LTS_CELLS", "48")]));
    assert_eq!(field(&from_env, "cells"), Some("48"));
    let from_flag = stdout(&lts(&["--print-config", "--config", p, "--cells", "56"], &[("LTS_CELLS", "48")]));
    assert_eq!(field(&from_flag, "cells"), Some("56"));
}

#[test]
fn run_writes_outputs_and_check_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let stats = dir.path().join("stats.json");
    let out = lts(
        &["--cells", "50", "--submeshes", "4", "--trace-out", trace.to_str().unwrap(), "--stats-out", stats.to_str().unwrap()],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("elapsed_us=")));
    assert!(text.contains("CHECK replay PASS"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(json["cells"], 50);

    let ok = lts(&["check", trace.to_str().unwrap()], &[]);
    assert_eq!(ok.status.code(), Some(0));

    // bump one state of the last update so the replay no longer matches
    let body = fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = body.lines().map(String::from).collect();
    let last = lines.iter().rposition(|l| l.starts_with("update,")).unwrap();
    let mut cols: Vec<String> = lines[last].split(',').map(String::from).collect();
    let v: f64 = cols[5].parse().unwrap();
    cols[5] = format!("{:e}", v + 0.25);
    lines[last] = cols.join(",");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let fail = lts(&["check", bad.to_str().unwrap()], &[]);
    assert_eq!(fail.status.code(), Some(2));
    assert!(stdout(&fail).contains("CHECK replay FAIL"));
}

#[test]
fn invalid_configuration_is_reported() {
    let out = lts(&["--problem", "swe", "--ics", "shockwave", "--flux", "llf"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = lts(&["--cells", "0"], &[]);
    assert_eq!(out.status.code(), Some(1));
}
