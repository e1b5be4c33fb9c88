//! End-to-end tests through the compiled binary: the full
//! generate -> train -> estimate -> benchmark -> report chain on a tiny
//! noiseless dataset, plus the documented failure exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graysense"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn generate_small(dir: &Path, seed: &str) {
    let cfg = dir.join("gen.json");
    fs::write(
        &cfg,
        r#"{"plan": {"n_frequency_sets": 2, "taus_per_set": 6, "repetitions": 100000,
                     "exact_probabilities": true, "mc_shots": 1}}"#,
    )
    .unwrap();
    let out = run(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        seed,
        "--out",
        dir.join("gen").to_str().unwrap(),
    ]);
    assert_success(&out);
}

#[test]
fn generate_writes_dataset_truth_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    generate_small(tmp.path(), "7");
    let gen = tmp.path().join("gen");

    let dataset = fs::read_to_string(gen.join("dataset.jsonl")).unwrap();
    assert_eq!(dataset.lines().count(), 12);
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(gen.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth.as_object().unwrap().len(), 2);
    let config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(gen.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["command"], "generate");
    assert_eq!(config["seed"], 7);
    assert_eq!(config["plan"]["n_frequency_sets"], 2);

    // same seed, second directory: byte-identical dataset
    let tmp2 = tempfile::tempdir().unwrap();
    generate_small(tmp2.path(), "7");
    let again = fs::read_to_string(tmp2.path().join("gen/dataset.jsonl")).unwrap();
    assert_eq!(dataset, again);
}

#[test]
fn generate_rejects_zero_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"plan": {"n_frequency_sets": 0}}"#).unwrap();
    let out = run(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("gen").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_missing_dataset_is_an_io_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--dataset",
        tmp.path().join("nope.jsonl").to_str().unwrap(),
        "--out",
        tmp.path().join("train").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn estimate_requires_prior_bounds_and_matching_provider_flags() {
    let tmp = tempfile::tempdir().unwrap();
    generate_small(tmp.path(), "3");
    let dataset = tmp.path().join("gen/dataset.jsonl");

    // no --fmin-mhz/--fmax-mhz anywhere
    let out = run(&[
        "estimate",
        "--dataset",
        dataset.to_str().unwrap(),
        "--set-id",
        "0",
        "--provider",
        "wb",
        "--t2star-us",
        "inf",
        "--out",
        tmp.path().join("est").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));

    // gb without a checkpoint
    let out = run(&[
        "estimate",
        "--dataset",
        dataset.to_str().unwrap(),
        "--set-id",
        "0",
        "--provider",
        "gb",
        "--fmin-mhz",
        "0",
        "--fmax-mhz",
        "2",
        "--out",
        tmp.path().join("est").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));

    // multi-set dataset without --set-id
    let out = run(&[
        "estimate",
        "--dataset",
        dataset.to_str().unwrap(),
        "--provider",
        "wb",
        "--t2star-us",
        "inf",
        "--fmin-mhz",
        "0",
        "--fmax-mhz",
        "2",
        "--out",
        tmp.path().join("est").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));

    // unknown set id
    let out = run(&[
        "estimate",
        "--dataset",
        dataset.to_str().unwrap(),
        "--set-id",
        "9",
        "--provider",
        "wb",
        "--t2star-us",
        "inf",
        "--fmin-mhz",
        "0",
        "--fmax-mhz",
        "2",
        "--out",
        tmp.path().join("est").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn full_chain_train_estimate_benchmark_report() {
    let tmp = tempfile::tempdir().unwrap();
    generate_small(tmp.path(), "11");
    let gen = tmp.path().join("gen");
    let dataset = gen.join("dataset.jsonl");
    let train_dir = tmp.path().join("train");

    let out = run(&[
        "train",
        "--dataset",
        dataset.to_str().unwrap(),
        "--iterations",
        "300",
        "--hidden",
        "8",
        "--seed",
        "1",
        "--out",
        train_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert!(train_dir.join("checkpoint.json").is_file());
    assert!(train_dir.join("loss.csv").is_file());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(train_dir.join("train_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["diverged"], false);
    assert_eq!(report["iterations_run"], 300);

    // whitebox estimation on one set; noiseless data, so no decay
    let est_dir = tmp.path().join("est");
    let out = run(&[
        "estimate",
        "--dataset",
        dataset.to_str().unwrap(),
        "--set-id",
        "0",
        "--provider",
        "wb",
        "--t2star-us",
        "inf",
        "--fmin-mhz",
        "0",
        "--fmax-mhz",
        "2",
        "--grid-m",
        "150",
        "--orderings",
        "3",
        "--out",
        est_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert!(est_dir.join("trace_whitebox.csv").is_file());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(est_dir.join("summary_whitebox.json")).unwrap())
            .unwrap();
    assert_eq!(summary["n_batches"], 6);
    // exact counts and the exact model: the estimate lands near the truth
    assert!(summary["final_mean_e_mhz2"].as_f64().unwrap() < 1e-2);
    let trace = fs::read_to_string(est_dir.join("trace_whitebox.csv")).unwrap();
    assert_eq!(trace.lines().count(), 7); // header + 6 iterations
    assert!(trace.starts_with("iteration,mean_fhat_MHz,mean_E_MHz2,mean_V_MHz2,skip_rate"));

    // benchmark both providers over both sets
    let bench_dir = tmp.path().join("bench");
    let out = run(&[
        "benchmark",
        "--dataset",
        dataset.to_str().unwrap(),
        "--truth",
        gen.join("truth.json").to_str().unwrap(),
        "--checkpoint",
        train_dir.join("checkpoint.json").to_str().unwrap(),
        "--t2star-us",
        "inf",
        "--fmin-mhz",
        "0",
        "--fmax-mhz",
        "2",
        "--grid-m",
        "120",
        "--orderings",
        "2",
        "--seed",
        "5",
        "--out",
        bench_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let sets_csv = fs::read_to_string(bench_dir.join("benchmark_sets.csv")).unwrap();
    assert_eq!(sets_csv.lines().count(), 5); // header + 2 sets x 2 providers
    let summary: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(bench_dir.join("benchmark_summary.json")).unwrap(),
    )
    .unwrap();
    assert!(summary["providers"]["graybox"].is_object());
    assert!(summary["providers"]["whitebox"].is_object());
    assert_eq!(summary["providers"]["whitebox"]["n_sets"], 2);
    let traces: Vec<_> = fs::read_dir(bench_dir.join("traces")).unwrap().collect();
    assert_eq!(traces.len(), 4);

    // report consolidates; a second run is byte-identical
    let rep_dir = tmp.path().join("rep");
    let report_args = [
        "report",
        "--benchmark",
        bench_dir.to_str().unwrap(),
        "--out",
        rep_dir.to_str().unwrap(),
    ];
    let out = run(&report_args);
    assert_success(&out);
    let long = fs::read_to_string(rep_dir.join("report_long.csv")).unwrap();
    assert!(long.starts_with("provider,set_id,iteration,metric,value"));
    // 4 traces x 6 iterations x 4 metrics + header
    assert_eq!(long.lines().count(), 97);
    assert!(long.contains("\ngraybox,"));
    assert!(long.contains("\nwhitebox,"));
    assert!(rep_dir.join("report_summary.json").is_file());

    let out = run(&report_args);
    assert_success(&out);
    assert_eq!(long, fs::read_to_string(rep_dir.join("report_long.csv")).unwrap());
}

#[test]
fn report_names_a_malformed_trace_file() {
    let tmp = tempfile::tempdir().unwrap();
    let bench = tmp.path().join("bench");
    let traces = bench.join("traces");
    fs::create_dir_all(&traces).unwrap();
    fs::write(bench.join("benchmark_summary.json"), "{}").unwrap();
    fs::write(
        traces.join("whitebox_set0.csv"),
        "iteration,mean_fhat_MHz,mean_E_MHz2,mean_V_MHz2,skip_rate\n1,not-a-number,0,0,0\n",
    )
    .unwrap();
    let out = run(&[
        "report",
        "--benchmark",
        bench.to_str().unwrap(),
        "--out",
        tmp.path().join("rep").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("whitebox_set0.csv"), "stderr: {stderr}");
}
