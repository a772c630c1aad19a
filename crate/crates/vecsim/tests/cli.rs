//! End-to-end checks of the `vecsim` binary: exit codes, diagnostics, and
//! the CSV contract.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vecsim"))
}

#[test]
fn sweep_writes_csv_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rows.csv");
    let status = bin()
        .args([
            "--sweep",
            "K",
            "--values",
            "2,3",
            "--schemes",
            "local,equal-bit",
            "--seeds",
            "2",
            "--base-seed",
            "11",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scheme,axis,axis_value,seed,total_energy_j,iterations,gap,wall_time_s"
    );
    // 2 schemes x 2 values x 2 seeds.
    assert_eq!(lines.count(), 8);
}

#[test]
fn bad_axis_fails_with_diagnostic() {
    let output = bin().args(["--sweep", "Q"]).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("unknown sweep axis"), "stderr: {stderr}");
}

#[test]
fn config_file_is_honored_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.toml");
    let out = dir.path().join("rows.csv");
    std::fs::write(
        &config,
        r#"
[tasks]
num_vehicles = 2
input_bits = 1.0e5

[experiment]
sweep = "T"
values = [0.6]
schemes = ["local"]
num_seeds = 3
"#,
    )
    .unwrap();
    let status = bin()
        .args(["--config"])
        .arg(&config)
        .args(["--seeds", "1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    // --seeds 1 overrides the file's 3: one local row for the single value.
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("local,T,"));
}

#[test]
fn missing_config_fails() {
    let output = bin()
        .args(["--config", "/nonexistent/cfg.toml"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("error:"), "stderr: {stderr}");
}
