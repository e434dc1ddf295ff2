//! End-to-end checks of the `oraclesim` binary: artifact determinism, file
//! and stdout output modes, scenario loading, and argument validation.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn oraclesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oraclesim"))
        .args(args)
        .output()
        .expect("binary must launch")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

#[test]
fn response_time_runs_reproduce_byte_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let output = oraclesim(&[
            "run-experiment",
            "response-time",
            "--config",
            "uniform",
            "--seed",
            "5",
            "--tasks",
            "10",
            "--strategy",
            "weighted",
            "--strategy",
            "random",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
        assert!(stdout(&output).contains("weighted"));
    }
    let csv_a = read(&a.join("response_times.csv"));
    let csv_b = read(&b.join("response_times.csv"));
    assert!(csv_a.starts_with("seed,task,strategy,response_ms\n"));
    assert!(csv_a.lines().count() > 10);
    assert_eq!(csv_a, csv_b);
}

#[test]
fn scenarios_load_from_files_and_csv_streams_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scenario.json");
    fs::write(&config, oraclesim_core::experiments::configs::UNIFORM).unwrap();

    let output = oraclesim(&[
        "run-experiment",
        "qos-trace",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "3",
        "--tasks",
        "8",
    ]);
    assert!(output.status.success());
    let csv = stdout(&output);
    assert!(csv.starts_with("task,node,qos,aggregated\n"));
    // Initial rows for all six nodes plus one row per node per task.
    assert_eq!(csv.lines().count(), 1 + 6 + 8 * 6);
}

#[test]
fn scalability_sweep_emits_one_row_per_membership() {
    let dir = tempfile::tempdir().unwrap();
    let output = oraclesim(&[
        "run-experiment",
        "scalability",
        "--config",
        "membership-sweep",
        "--seed",
        "1",
        "--tasks",
        "150",
        "--sweep",
        "n=2..4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let csv = read(&dir.path().join("scalability.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,analytical_success,simulated_success");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("2,"));
    assert!(lines[3].starts_with("4,"));
}

#[test]
fn selection_counts_cover_every_node() {
    let output = oraclesim(&[
        "run-experiment",
        "selection-counts",
        "--config",
        "uniform",
        "--tasks",
        "12",
    ]);
    assert!(output.status.success());
    let csv = stdout(&output);
    assert!(csv.starts_with("node,final_qos,times_selected\n"));
    assert_eq!(csv.lines().count(), 1 + 6);
}

#[test]
fn analyze_success_prob_matches_the_library() {
    let output = oraclesim(&[
        "analyze",
        "success-prob",
        "--mean",
        "100",
        "--std",
        "30",
        "--period",
        "50",
        "--nodes",
        "5",
        "--threshold",
        "3",
    ]);
    assert!(output.status.success());
    let text = stdout(&output);
    let expected = {
        use oraclesim_core::analysis::{self, LatencyModel, Window};
        let model = LatencyModel::new(100.0, 30.0).unwrap();
        let start = analysis::best_window_start(&model, 50.0).unwrap();
        let window = Window::new(start, 50.0).unwrap();
        let p = analysis::single_trial_p(&model, &window);
        analysis::agg_success_prob(5, 3, p).unwrap()
    };
    assert!(
        text.contains(&format!("= {expected:.6}")),
        "stdout should contain the library answer {expected:.6}, got:\n{text}"
    );
}

#[test]
fn bad_arguments_exit_nonzero_with_a_message() {
    let cases: &[&[&str]] = &[
        &["run-experiment", "response-time", "--config", "no-such-file.json"],
        &[
            "run-experiment",
            "response-time",
            "--config",
            "uniform",
            "--strategy",
            "fastest",
        ],
        &["run-experiment", "scalability", "--config", "membership-sweep", "--sweep", "bogus"],
        &["analyze", "success-prob", "--mean", "100", "--std", "30", "--period", "50", "--nodes", "5", "--threshold", "0"],
        &["analyze", "success-prob", "--mean", "100", "--std", "-1", "--period", "50", "--nodes", "5", "--threshold", "3"],
    ];
    for args in cases {
        let output = oraclesim(args);
        assert!(!output.status.success(), "args {args:?} should fail");
        assert!(!output.stderr.is_empty(), "args {args:?} should explain the failure");
    }
}
