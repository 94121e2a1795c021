use std::path::Path;
use std::process::{Command, Output};

fn skott(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skott"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn small_plan(dir: &Path) -> String {
    let path = dir.join("plan.json");
    std::fs::write(
        &path,
        r#"{
  "config": { "media_objects": 4, "epochs": 48, "repetitions": 2, "total_budget": 4800 },
  "algorithms": ["vnl", "skt1", "skt1+skt2+skt3"]
}"#,
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_reports_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let plan = small_plan(dir.path());
    let out = skott(
        &["run", "--plan", &plan, "--out", "reports", "--seed", "3"],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("skt1+skt2+skt3"));
    let csv = std::fs::read_to_string(dir.path().join("reports/epochs.csv")).unwrap();
    // 3 stacks x 2 repetitions x 48 epochs plus the header
    assert_eq!(csv.lines().count(), 3 * 2 * 48 + 1);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("reports/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["rows"].as_array().unwrap().len(), 3);
    assert_eq!(summary["baseline"], "vnl");
    assert!(dir.path().join("reports/series.json").exists());
}

#[test]
fn flags_override_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let plan = small_plan(dir.path());
    let out = skott(
        &[
            "run", "--plan", &plan, "--reps", "1", "--stacks", "lop,mab", "--slot", "2", "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("o/epochs.csv")).unwrap();
    // one slot of a two-day campaign
    assert_eq!(csv.lines().count(), 2 * 2 + 1);
    assert!(csv.contains(",lop,") && csv.contains(",mab,"));

    let out = skott(
        &[
            "run",
            "--plan",
            &plan,
            "--day-parting",
            "false",
            "--reps",
            "1",
            "--out",
            "p",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("p/epochs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3 * 48 + 1);
}

#[test]
fn environment_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let plan = small_plan(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_skott"))
        .args(["run", "--plan", &plan, "--reps", "1", "--out", "o"])
        .current_dir(dir.path())
        .env("SKOTT_ALGORITHMS", r#"["skt1"]"#)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("o/epochs.csv")).unwrap();
    assert!(!csv.contains(",vnl,"));

    let out = Command::new(env!("CARGO_BIN_EXE_skott"))
        .args(["run", "--plan", &plan])
        .current_dir(dir.path())
        .env("SKOTT_NOT_A_KEY", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let plan = small_plan(dir.path());
    for args in [
        vec!["run", "--plan", "missing.json"],
        vec!["run", "--plan", &plan, "--slot", "24"],
        vec!["run", "--plan", &plan, "--stacks", "skt9"],
        vec!["run", "--plan", &plan, "--baseline", "lop"],
        vec!["run", "--bogus-flag"],
        vec!["frobnicate"],
    ] {
        let out = skott(&args, dir.path());
        assert_eq!(
            out.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert_eq!(skott(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn truth_dump_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let plan = small_plan(dir.path());
    let out = skott(
        &[
            "truth",
            "--plan",
            &plan,
            "--rep",
            "1",
            "--out",
            "truth.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let check = skott(&["truth", "--load", "truth.json"], dir.path());
    assert_eq!(check.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&check.stdout).contains("4 media objects"));

    // a plan pinned to the dumped truth runs against it in every repetition
    let pinned = dir.path().join("pinned.json");
    std::fs::write(
        &pinned,
        r#"{ "config": { "media_objects": 4, "epochs": 48, "repetitions": 2 }, "algorithms": ["vnl"], "truth_file": "truth.json" }"#,
    )
    .unwrap();
    let out = skott(&["run", "--plan", pinned.to_str().unwrap()], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"ctr": [2.0], "itot": [1.0], "beta": [1.0]}"#,
    )
    .unwrap();
    assert_eq!(
        skott(&["truth", "--load", "bad.json"], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn report_resummarizes_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let plan = small_plan(dir.path());
    assert_eq!(
        skott(&["run", "--plan", &plan, "--out", "r"], dir.path())
            .status
            .code(),
        Some(0)
    );
    let original: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/summary.json")).unwrap())
            .unwrap();
    let out = skott(
        &[
            "report",
            "--plan",
            &plan,
            "--input",
            "r/epochs.csv",
            "--out",
            "again",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let again: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("again/summary.json")).unwrap(),
    )
    .unwrap();
    for (a, b) in original["rows"]
        .as_array()
        .unwrap()
        .iter()
        .zip(again["rows"].as_array().unwrap())
    {
        assert_eq!(a["algo"], b["algo"]);
        for key in ["spt", "clk", "cpc", "kld"] {
            let (x, y) = (a[key].as_f64().unwrap(), b[key].as_f64().unwrap());
            assert!(
                (x - y).abs() <= 1e-9 * x.abs().max(1.0),
                "{key}: {x} vs {y}"
            );
        }
    }
    let out = skott(
        &["report", "--input", "r/epochs.csv", "--baseline", "skt1"],
        dir.path(),
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("100.0%"));
}
