use std::path::Path;
use std::process::{Command, Output};

use wnlab::harness::CSV_HEADER;

fn wnlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wnlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn kernel_check_passes_with_exit_zero() {
    let o = wnlab(&["kernel-check", "--W", "4,16,64"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.ends_with(",pass")));
    assert_eq!(rows.iter().filter(|r| r.contains(",unit_mass,")).count(), 3);
}

#[test]
fn bad_value_exits_two_and_names_key() {
    let o = wnlab(&["whiteness", "--W", "4", "--M", "-5"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    let record: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(record["error"]["kind"], "config");
    assert_eq!(record["error"]["key"], "M");
}

#[test]
fn unknown_experiment_and_missing_w_exit_two() {
    assert_eq!(wnlab(&["nonsense", "--W", "4"]).status.code(), Some(2));
    assert_eq!(wnlab(&["kernel-check"]).status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# kernel checks\nexperiment=kernel-check\nW=4\nn=3\n").unwrap();
    let o = wnlab(&[
        "kernel-check",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "2",
        "--W",
        "8",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    assert!(
        row.starts_with("kernel-check,8.0000000000000000e0,2,"),
        "{row}"
    );
}

#[test]
fn unknown_key_in_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "experiment=kernel-check\nW=4\nbandwidth=3\n").unwrap();
    let o = wnlab(&["kernel-check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bandwidth"));
}

#[test]
fn both_formats_write_two_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report");
    let o = wnlab(&[
        "char-functional",
        "--W",
        "16",
        "--M",
        "2000",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "both",
    ]);
    assert!(matches!(o.status.code(), Some(0 | 1)));
    assert!(o.stdout.is_empty());
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    assert!(csv.starts_with(CSV_HEADER));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap())
            .unwrap();
    assert_eq!(json["experiment"], "char-functional");
    assert_eq!(json["config"]["seed"], "3");
    assert_eq!(json["reports"].as_array().unwrap().len(), 3);
}

#[test]
fn same_seed_gives_identical_csv_and_json_up_to_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let o = wnlab(&[
            "power-sweep",
            "--W",
            "8",
            "--M",
            "3000",
            "--N",
            "2",
            "--seed",
            "11",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
            "--format",
            "both",
        ]);
        assert!(matches!(o.status.code(), Some(0 | 1)));
        let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
        let mut json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap())
                .unwrap();
        json["wall_clock_seconds"] = serde_json::Value::Null;
        json["config"]["workers"] = serde_json::Value::Null;
        json["config"]["out"] = serde_json::Value::Null;
        (csv, json)
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "3");
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn unwritable_output_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("report.csv");
    assert!(!Path::new(&out).parent().unwrap().exists());
    let o = wnlab(&["kernel-check", "--W", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let record: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(record["error"]["kind"], "io");
}

#[test]
fn failing_verdict_exits_one() {
    // At W = 1 the renormalized square is far from white.
    let o = wnlab(&["whiteness", "--W", "1", "--N", "2", "--M", "2000"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).lines().skip(1).any(|l| l.ends_with(",fail")));
}
