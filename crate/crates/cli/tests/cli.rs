//! End-to-end CLI behavior: the pipeline, exit codes, and file-format
//! error reporting.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_convlasso"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, code: i32, context: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{context}: stdout={} stderr={}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn simulate_small(dir: &Path, prefix: &str, snr: Option<&str>) {
    let mut args = vec![
        "simulate",
        "--k",
        "2",
        "--d",
        "2",
        "--t",
        "12",
        "--n",
        "4000",
        "--rate-hz",
        "25",
        "--sample-rate-hz",
        "10000",
        "--seed",
        "5",
        "--out-prefix",
        prefix,
        "--quiet",
    ];
    if let Some(db) = snr {
        args.push("--snr-db");
        args.push(db);
    }
    let out = run(&args, dir);
    assert_code(&out, 0, "simulate");
}

#[test]
fn pipeline_simulate_solve_eval() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "ds", Some("15"));
    let out = run(
        &[
            "solve",
            "--signal",
            "ds.signal.bin",
            "--shapes",
            "ds.shapes.bin",
            "--lambda",
            "rel:0.08",
            "--out",
            "est.csv",
            "--quiet",
        ],
        dir.path(),
    );
    assert_code(&out, 0, "solve");
    let out = run(
        &[
            "eval",
            "--truth",
            "ds.truth.csv",
            "--est",
            "est.csv",
            "--tol",
            "1",
            "--cp-width",
            "7",
        ],
        dir.path(),
    );
    assert_code(&out, 0, "eval");
    let scores: serde_json::Value = serde_json::from_slice(&out.stdout).expect("eval prints JSON");
    let f1 = scores["f1"].as_f64().unwrap();
    assert!(f1 > 0.8, "pipeline recovery F1 = {f1}");
    // every artifact-producing step left a manifest
    assert!(dir.path().join("ds.manifest.json").exists());
    assert!(dir.path().join("est.csv.manifest.json").exists());
    assert!(dir.path().join("est.csv.report.json").exists());
}

#[test]
fn solver_choices_agree_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "ds", None);
    for solver in ["fista-full", "as-naive", "as-group", "as-window"] {
        let est = format!("est_{solver}.csv");
        let out = run(
            &[
                "solve",
                "--signal",
                "ds.signal.bin",
                "--shapes",
                "ds.shapes.bin",
                "--solver",
                solver,
                "--lambda",
                "rel:0.05",
                "--out",
                &est,
                "--quiet",
            ],
            dir.path(),
        );
        assert_code(&out, 0, solver);
    }
    // supports agree across solvers (values agree to solver tolerance; the
    // core suite checks that part)
    let support = |name: &str| -> Vec<(String, String)> {
        fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let mut it = l.split(',');
                (
                    it.next().unwrap().to_string(),
                    it.next().unwrap().to_string(),
                )
            })
            .collect()
    };
    let reference = support("est_fista-full.csv");
    assert!(!reference.is_empty());
    for solver in ["as-naive", "as-group", "as-window"] {
        assert_eq!(
            support(&format!("est_{solver}.csv")),
            reference,
            "{solver} support differs"
        );
    }
}

#[test]
fn invalid_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // unknown file
    let out = run(
        &[
            "solve",
            "--signal",
            "missing.bin",
            "--shapes",
            "missing.bin",
            "--lambda",
            "0.5",
            "--out",
            "x.csv",
        ],
        dir.path(),
    );
    assert_code(&out, 2, "missing inputs");

    // malformed lambda
    let out = run(
        &[
            "solve", "--signal", "m.bin", "--shapes", "m.bin", "--lambda", "rel:-2", "--out",
            "x.csv",
        ],
        dir.path(),
    );
    assert_code(&out, 2, "negative relative lambda");

    // truncated signal payload: error must name a byte offset
    simulate_small(dir.path(), "ds", None);
    let path = dir.path().join("ds.signal.bin");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    let out = run(
        &[
            "solve",
            "--signal",
            "ds.signal.bin",
            "--shapes",
            "ds.shapes.bin",
            "--lambda",
            "rel:0.1",
            "--out",
            "x.csv",
        ],
        dir.path(),
    );
    assert_code(&out, 2, "truncated payload");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("byte") && stderr.contains("truncated"),
        "stderr should name the byte offset: {stderr}"
    );

    // duplicate activation rows
    fs::write(
        dir.path().join("dup.csv"),
        "neuron,sample,amplitude\n0,5,1.0\n0,5,2.0\n",
    )
    .unwrap();
    let out = run(
        &["overlap-stats", "--acts", "dup.csv", "--t", "3"],
        dir.path(),
    );
    assert_code(&out, 2, "duplicate csv row");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 2"), "stderr: {stderr}");
}

#[test]
fn uncertified_exits_3_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "ds", None);
    let base = [
        "solve",
        "--signal",
        "ds.signal.bin",
        "--shapes",
        "ds.shapes.bin",
        "--solver",
        "as-naive",
        "--lambda",
        "rel:0.05",
        "--max-iter",
        "1",
        "--out",
        "x.csv",
        "--quiet",
    ];
    let out = run(&base, dir.path());
    assert_code(&out, 3, "iteration-starved solve");
    let mut allowed = base.to_vec();
    allowed.push("--allow-uncertified");
    let out = run(&allowed, dir.path());
    assert_code(&out, 0, "explicitly allowed");
}

#[test]
fn timeout_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "ds", None);
    let out = run(
        &[
            "solve",
            "--signal",
            "ds.signal.bin",
            "--shapes",
            "ds.shapes.bin",
            "--lambda",
            "rel:0.05",
            "--time-limit-secs",
            "0.000001",
            "--out",
            "x.csv",
            "--quiet",
        ],
        dir.path(),
    );
    assert_code(&out, 4, "timed out solve");
}

#[test]
fn sweep_at_lambda_above_max_scores_zero_f1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "sweep",
            "--k",
            "2",
            "--d",
            "2",
            "--t",
            "6",
            "--n",
            "600",
            "--rate-hz",
            "50",
            "--sample-rate-hz",
            "4000",
            "--draws",
            "3",
            "--seed",
            "8",
            "--lambda-rel",
            "1.001",
            "--snr-db",
            "20,none",
            "--out-prefix",
            "sw",
            "--quiet",
        ],
        dir.path(),
    );
    assert_code(&out, 0, "sweep above lambda_max");
    let cells = fs::read_to_string(dir.path().join("sw.cells.csv")).unwrap();
    for line in cells.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let f1: f64 = fields[4].parse().unwrap();
        assert_eq!(f1, 0.0, "zero solution must score F1 = 0: {line}");
    }
}

#[test]
fn noiseless_sweep_column_recovers_exactly() {
    // well-separated spikes, tiny lambda, no noise: mean F1 is exactly 1
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "sweep",
            "--k",
            "2",
            "--d",
            "4",
            "--t",
            "6",
            "--n",
            "2000",
            "--rate-hz",
            "10",
            "--sample-rate-hz",
            "10000",
            "--draws",
            "5",
            "--seed",
            "12",
            "--lambda-rel",
            "0.01",
            "--snr-db",
            "none",
            "--out-prefix",
            "nl",
            "--quiet",
        ],
        dir.path(),
    );
    assert_code(&out, 0, "noiseless sweep");
    let cells = fs::read_to_string(dir.path().join("nl.cells.csv")).unwrap();
    let row = cells.lines().nth(1).expect("one cell");
    let f1: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
    assert_eq!(f1, 1.0, "cell: {row}");
    // five manifest-linked sub-runs behind the cell
    let draws = fs::read_to_string(dir.path().join("nl.draws.csv")).unwrap();
    assert_eq!(draws.lines().count(), 1 + 5);
}

#[test]
fn json_flag_emits_machine_output() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "ds", None);
    let out = run(
        &[
            "--json",
            "--quiet",
            "solve",
            "--signal",
            "ds.signal.bin",
            "--shapes",
            "ds.shapes.bin",
            "--lambda",
            "rel:0.1",
            "--out",
            "est.csv",
        ],
        dir.path(),
    );
    assert_code(&out, 0, "json solve");
    let parsed: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stdout is a JSON document");
    assert_eq!(parsed["certified"], true);
    assert!(parsed["activations"].as_u64().unwrap() > 0);
}

#[test]
fn overlap_stats_reports_known_partition() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("acts.csv"),
        "neuron,sample,amplitude\n0,0,1.0\n0,5,1.0\n0,9,1.0\n0,30,1.0\n",
    )
    .unwrap();
    let out = run(
        &[
            "overlap-stats",
            "--acts",
            "acts.csv",
            "--t",
            "5",
            "--n",
            "100",
        ],
        dir.path(),
    );
    assert_code(&out, 0, "overlap stats");
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["pooled"]["group_count"], 2);
    assert_eq!(stats["pooled"]["mean_size"], 2.0);
    assert_eq!(stats["pooled"]["max_size"], 3);
    let bound = stats["theoretical_mean_bound"].as_f64().unwrap();
    let mu = 4.0 / 100.0;
    assert!((bound - mu * 5.0 * (mu * 5.0f64).exp()).abs() < 1e-12);
}

#[test]
fn eval_shift_case_matches_formula() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("t.csv"),
        "neuron,sample,amplitude\n0,20,1.0\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("e.csv"),
        "neuron,sample,amplitude\n0,21,1.0\n",
    )
    .unwrap();
    let out = run(
        &[
            "eval",
            "--truth",
            "t.csv",
            "--est",
            "e.csv",
            "--tol",
            "0",
            "--cp-width",
            "5",
        ],
        dir.path(),
    );
    assert_code(&out, 0, "eval");
    let scores: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(scores["f1"], 0.0);
    let cp = scores["cp"].as_f64().unwrap();
    assert!((cp - 0.8).abs() < 1e-12, "cp = {cp}");
}

#[test]
fn bench_tiny_plan_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let plan = serde_json::json!({
        "solvers": ["as-window"],
        "n_values": [2000, 4000],
        "reps": 2,
        "k": 2,
        "d": 2,
        "t": 12,
        "mu": 0.002,
        "snr_db": null,
        "lambda_rel": 0.1,
        "window": null,
        "seed": 44,
        "time_limit_secs": 60.0,
    });
    fs::write(dir.path().join("plan.json"), plan.to_string()).unwrap();
    let out = run(
        &[
            "bench",
            "--plan",
            "plan.json",
            "--out",
            "rows.csv",
            "--quiet",
        ],
        dir.path(),
    );
    assert_code(&out, 0, "bench");
    let rows = fs::read_to_string(dir.path().join("rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4, "header plus 2 sizes x 2 reps");
    assert!(rows.starts_with("solver,n,rep,seconds,iterations,certified\n"));
    let summary = fs::read_to_string(dir.path().join("rows.csv.summary.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(parsed[0]["solver"], "as-window");
    assert!(parsed[0]["slope"].is_null(), "2 sizes cannot fit a slope");
}
