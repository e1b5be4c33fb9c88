use crate::config::{self, FileConfig, Quartiles, ResolvedEstimate};
use crate::{BenchmarkArgs, EstimateArgs, GenerateArgs, ProviderKind, ReportArgs, TrainArgs};
use graysense::bayes::{
    run_estimation, write_trace_csv, EstimationOptions, GrayboxProvider, LikelihoodProvider,
    MeasurementBatch, WhiteboxProvider,
};
use graysense::graybox::{
    load_checkpoint, save_checkpoint, train, write_loss_csv, GrayboxParams, TrainOptions,
};
use graysense::sim::{generate_dataset, read_dataset, write_dataset, DatasetRecord};
use graysense::whitebox::WhiteboxConfig;
use graysense::{Error, Result, StreamSeed};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

pub fn run_generate(args: &GenerateArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let mut plan = file.plan.unwrap_or_default();
    if let Some(sets) = args.sets {
        plan.n_frequency_sets = sets;
    }
    if let Some(taus) = args.taus {
        plan.taus_per_set = taus;
    }
    if let Some(reps) = args.repetitions {
        plan.repetitions = reps;
    }
    if args.exact {
        plan.exact_probabilities = true;
    }
    let noise = file.noise.unwrap_or_default();

    config::prepare_out_dir(&args.common.out)?;
    let records = generate_dataset(&plan, &noise, StreamSeed::new(args.common.seed))?;
    let dataset_path = args.common.out.join("dataset.jsonl");
    write_dataset(&dataset_path, &records)?;

    let truth: BTreeMap<u32, f64> = records
        .iter()
        .map(|r| (r.set_id, r.truth_f_b_mhz))
        .collect();
    config::write_pretty_json(&args.common.out.join("truth.json"), &truth)?;

    #[derive(Serialize)]
    struct Resolved<'a> {
        command: &'static str,
        seed: u64,
        plan: &'a graysense::sim::DatasetPlan,
        noise: &'a graysense::sim::NoiseConfig,
    }
    config::write_pretty_json(
        &args.common.out.join("config.json"),
        &Resolved {
            command: "generate",
            seed: args.common.seed,
            plan: &plan,
            noise: &noise,
        },
    )?;

    println!(
        "wrote {} records across {} sets to {}",
        records.len(),
        truth.len(),
        dataset_path.display()
    );
    Ok(())
}

pub fn run_train(args: &TrainArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let mut section = file.train.unwrap_or_default();
    if let Some(it) = args.iterations {
        section.iterations = it;
    }
    if let Some(hidden) = &args.hidden {
        section.hidden = hidden.clone();
    }
    if let Some(lr) = args.learning_rate {
        section.learning_rate = lr;
    }

    let records = read_dataset(&args.dataset)?;
    let seed = StreamSeed::new(args.common.seed);
    let init = GrayboxParams::for_dataset(&records, &section.hidden, seed.child(1))?;
    let mut opts = TrainOptions::new(seed.child(2));
    opts.iterations = section.iterations;
    opts.split_ratio = section.split_ratio;
    opts.eval_every = section.eval_every;
    opts.batch_size = section.batch_size;
    opts.adam.learning_rate = section.learning_rate;
    opts.loss = section.loss;

    config::prepare_out_dir(&args.common.out)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        command: &'static str,
        seed: u64,
        dataset: String,
        train: &'a config::TrainSection,
    }
    config::write_pretty_json(
        &args.common.out.join("config.json"),
        &Resolved {
            command: "train",
            seed: args.common.seed,
            dataset: args.dataset.display().to_string(),
            train: &section,
        },
    )?;

    let (trained, report) = train(init, &records, &opts)?;
    save_checkpoint(&trained, &args.common.out.join("checkpoint.json"))?;
    write_loss_csv(&report, &args.common.out.join("loss.csv"))?;

    #[derive(Serialize)]
    struct Summary {
        n_train: usize,
        n_test: usize,
        iterations_run: usize,
        final_train_mse: f64,
        final_test_mse: Option<f64>,
        diverged: bool,
    }
    config::write_pretty_json(
        &args.common.out.join("train_report.json"),
        &Summary {
            n_train: report.n_train,
            n_test: report.n_test,
            iterations_run: report.train_loss.len(),
            final_train_mse: report.final_train_mse,
            final_test_mse: report.final_test_mse,
            diverged: report.diverged,
        },
    )?;

    match report.final_test_mse {
        Some(t) => println!(
            "train MSE {:.3e}, held-out MSE {t:.3e}",
            report.final_train_mse
        ),
        None => println!("train MSE {:.3e} (no held-out split)", report.final_train_mse),
    }
    if report.diverged {
        return Err(Error::NumericOverflow(
            "training diverged; checkpoint holds the last good snapshot".into(),
        ));
    }
    Ok(())
}

fn resolve_estimate(
    section: Option<config::EstimateSection>,
    fmin: Option<f64>,
    fmax: Option<f64>,
    grid_m: Option<usize>,
    orderings: Option<usize>,
    mode: Option<crate::ModeArg>,
) -> Result<ResolvedEstimate> {
    let section = section.unwrap_or_default();
    let f_min_mhz = fmin.or(section.f_min_mhz).ok_or_else(|| {
        Error::invalid("prior lower bound required: pass --fmin-mhz or set estimate.f_min_mhz")
    })?;
    let f_max_mhz = fmax.or(section.f_max_mhz).ok_or_else(|| {
        Error::invalid("prior upper bound required: pass --fmax-mhz or set estimate.f_max_mhz")
    })?;
    Ok(ResolvedEstimate {
        f_min_mhz,
        f_max_mhz,
        grid_m: grid_m.unwrap_or(section.grid_m),
        orderings: orderings.unwrap_or(section.orderings),
        mode: mode.map(Into::into).unwrap_or(section.mode),
    })
}

fn build_whitebox(t2star_us: Option<f64>) -> Result<WhiteboxProvider> {
    let t2 = t2star_us
        .ok_or_else(|| Error::invalid("whitebox provider needs --t2star-us"))?;
    Ok(WhiteboxProvider::new(WhiteboxConfig::new(t2)?))
}

fn build_graybox(checkpoint: Option<&Path>) -> Result<GrayboxProvider> {
    let path =
        checkpoint.ok_or_else(|| Error::invalid("graybox provider needs --checkpoint"))?;
    GrayboxProvider::new(load_checkpoint(path)?)
}

/// Pick one frequency set out of the dataset.
fn select_set(records: &[DatasetRecord], requested: Option<u32>) -> Result<(u32, Vec<&DatasetRecord>)> {
    if records.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    match requested {
        Some(id) => {
            let subset: Vec<&DatasetRecord> =
                records.iter().filter(|r| r.set_id == id).collect();
            if subset.is_empty() {
                return Err(Error::invalid(format!("dataset has no set {id}")));
            }
            Ok((id, subset))
        }
        None => {
            let ids: BTreeSet<u32> = records.iter().map(|r| r.set_id).collect();
            if ids.len() > 1 {
                return Err(Error::invalid(format!(
                    "dataset contains {} sets; pick one with --set-id",
                    ids.len()
                )));
            }
            let id = *ids.iter().next().unwrap();
            Ok((id, records.iter().collect()))
        }
    }
}

fn estimation_options(est: &ResolvedEstimate, seed: StreamSeed) -> EstimationOptions {
    EstimationOptions {
        f_min_mhz: est.f_min_mhz,
        f_max_mhz: est.f_max_mhz,
        grid_m: est.grid_m,
        orderings: est.orderings,
        mode: est.mode,
        seed,
    }
}

#[derive(Serialize)]
struct EstimateSummary {
    provider: String,
    set_id: u32,
    truth_f_b_mhz: f64,
    n_batches: usize,
    final_mean_fhat_mhz: f64,
    final_mean_e_mhz2: f64,
    final_mean_v_mhz2: f64,
    total_skipped: usize,
    per_ordering_final_e_mhz2: Quartiles,
}

pub fn run_estimate(args: &EstimateArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let est = resolve_estimate(
        file.estimate,
        args.fmin_mhz,
        args.fmax_mhz,
        args.grid_m,
        args.orderings,
        args.mode,
    )?;
    let records = read_dataset(&args.dataset)?;
    let (set_id, set_records) = select_set(&records, args.set_id)?;
    let truth = set_records[0].truth_f_b_mhz;
    let batches: Vec<MeasurementBatch> =
        set_records.iter().map(|r| MeasurementBatch::from(*r)).collect();

    let provider: Box<dyn LikelihoodProvider> = match args.provider {
        ProviderKind::Wb => Box::new(build_whitebox(args.t2star_us)?),
        ProviderKind::Gb => Box::new(build_graybox(args.checkpoint.as_deref())?),
    };

    config::prepare_out_dir(&args.common.out)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        command: &'static str,
        seed: u64,
        dataset: String,
        set_id: u32,
        provider: &'static str,
        checkpoint: Option<String>,
        t2star_us: Option<f64>,
        estimate: &'a ResolvedEstimate,
    }
    config::write_pretty_json(
        &args.common.out.join("config.json"),
        &Resolved {
            command: "estimate",
            seed: args.common.seed,
            dataset: args.dataset.display().to_string(),
            set_id,
            provider: provider.name(),
            checkpoint: args.checkpoint.as_ref().map(|p| p.display().to_string()),
            t2star_us: args.t2star_us,
            estimate: &est,
        },
    )?;

    let result = run_estimation(
        &batches,
        truth,
        provider.as_ref(),
        &estimation_options(&est, StreamSeed::new(args.common.seed)),
    )?;

    let name = result.provider.clone();
    write_trace_csv(
        &result.trace,
        &args.common.out.join(format!("trace_{name}.csv")),
    )?;
    let last = result.trace.rows.last().expect("at least one batch");
    let finals: Vec<f64> = result.per_ordering.iter().map(|o| o.e_mhz2).collect();
    let summary = EstimateSummary {
        provider: name.clone(),
        set_id,
        truth_f_b_mhz: truth,
        n_batches: batches.len(),
        final_mean_fhat_mhz: last.mean_fhat_mhz,
        final_mean_e_mhz2: last.mean_e_mhz2,
        final_mean_v_mhz2: last.mean_v_mhz2,
        total_skipped: result.per_ordering.iter().map(|o| o.n_skipped).sum(),
        per_ordering_final_e_mhz2: config::quartiles(&finals)?,
    };
    config::write_pretty_json(
        &args.common.out.join(format!("summary_{name}.json")),
        &summary,
    )?;

    println!(
        "{name}: set {set_id}, f_hat {:.6} MHz (truth {:.6}), final E {:.3e} MHz^2",
        last.mean_fhat_mhz, truth, last.mean_e_mhz2
    );
    Ok(())
}

#[derive(Serialize)]
struct ProviderSummary {
    n_sets: usize,
    n_converged: usize,
    convergence_rate: f64,
    final_e_mhz2: Quartiles,
    final_v_mhz2: Quartiles,
}

#[derive(Serialize)]
struct BenchmarkSummary {
    seed: u64,
    grid_m: usize,
    orderings: usize,
    tolerance_mhz: f64,
    providers: BTreeMap<String, ProviderSummary>,
}

pub fn run_benchmark(args: &BenchmarkArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let est = resolve_estimate(
        file.estimate,
        args.fmin_mhz,
        args.fmax_mhz,
        args.grid_m,
        args.orderings,
        args.mode,
    )?;
    let records = read_dataset(&args.dataset)?;
    if records.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let truth_text = std::fs::read_to_string(&args.truth)?;
    let truth_map: BTreeMap<u32, f64> =
        serde_json::from_str(&truth_text).map_err(|e| Error::Parse {
            path: args.truth.display().to_string(),
            message: e.to_string(),
        })?;

    let gb = build_graybox(Some(&args.checkpoint))?;
    let wb = build_whitebox(Some(args.t2star_us))?;
    let providers: [&dyn LikelihoodProvider; 2] = [&gb, &wb];

    let mut groups: BTreeMap<u32, Vec<&DatasetRecord>> = BTreeMap::new();
    for rec in &records {
        groups.entry(rec.set_id).or_default().push(rec);
    }

    config::prepare_out_dir(&args.common.out)?;
    let traces_dir = args.common.out.join("traces");
    config::prepare_out_dir(&traces_dir)?;
    let spacing = (est.f_max_mhz - est.f_min_mhz) / est.grid_m as f64;
    let tolerance_mhz = args.tolerance_spacings * spacing;

    #[derive(Serialize)]
    struct Resolved<'a> {
        command: &'static str,
        seed: u64,
        dataset: String,
        truth: String,
        checkpoint: String,
        t2star_us: f64,
        tolerance_spacings: f64,
        estimate: &'a ResolvedEstimate,
    }
    config::write_pretty_json(
        &args.common.out.join("config.json"),
        &Resolved {
            command: "benchmark",
            seed: args.common.seed,
            dataset: args.dataset.display().to_string(),
            truth: args.truth.display().to_string(),
            checkpoint: args.checkpoint.display().to_string(),
            t2star_us: args.t2star_us,
            tolerance_spacings: args.tolerance_spacings,
            estimate: &est,
        },
    )?;

    let root = StreamSeed::new(args.common.seed);
    let mut csv_writer =
        csv::Writer::from_path(args.common.out.join("benchmark_sets.csv")).map_err(|e| {
            Error::Parse {
                path: args.common.out.join("benchmark_sets.csv").display().to_string(),
                message: e.to_string(),
            }
        })?;
    csv_writer
        .write_record([
            "set_id",
            "provider",
            "truth_fB_MHz",
            "final_fhat_MHz",
            "final_E_MHz2",
            "final_V_MHz2",
            "converged",
        ])
        .map_err(|e| Error::Parse {
            path: "benchmark_sets.csv".into(),
            message: e.to_string(),
        })?;

    let mut finals: BTreeMap<String, (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for (&set_id, recs) in &groups {
        let truth = *truth_map.get(&set_id).ok_or_else(|| {
            Error::invalid(format!("truth file has no entry for set {set_id}"))
        })?;
        let batches: Vec<MeasurementBatch> =
            recs.iter().map(|r| MeasurementBatch::from(*r)).collect();
        for provider in providers {
            // same seed for both providers: identical batch orderings
            let opts = estimation_options(&est, root.child(u64::from(set_id)));
            let result = run_estimation(&batches, truth, provider, &opts)?;
            let name = result.provider.clone();
            write_trace_csv(
                &result.trace,
                &traces_dir.join(format!("{name}_set{set_id}.csv")),
            )?;
            let last = result.trace.rows.last().expect("non-empty batches");
            let converged = (last.mean_fhat_mhz - truth).abs() <= tolerance_mhz;
            csv_writer
                .write_record([
                    set_id.to_string(),
                    name.clone(),
                    format!("{truth:.16e}"),
                    format!("{:.16e}", last.mean_fhat_mhz),
                    format!("{:.16e}", last.mean_e_mhz2),
                    format!("{:.16e}", last.mean_v_mhz2),
                    converged.to_string(),
                ])
                .map_err(|e| Error::Parse {
                    path: "benchmark_sets.csv".into(),
                    message: e.to_string(),
                })?;
            let entry = finals.entry(name).or_default();
            entry.0.push(last.mean_e_mhz2);
            entry.1.push(last.mean_v_mhz2);
            if converged {
                entry.2 += 1;
            }
        }
    }
    csv_writer.flush()?;

    let mut providers_summary = BTreeMap::new();
    for (name, (es, vs, n_converged)) in &finals {
        providers_summary.insert(
            name.clone(),
            ProviderSummary {
                n_sets: es.len(),
                n_converged: *n_converged,
                convergence_rate: *n_converged as f64 / es.len() as f64,
                final_e_mhz2: config::quartiles(es)?,
                final_v_mhz2: config::quartiles(vs)?,
            },
        );
    }
    let summary = BenchmarkSummary {
        seed: args.common.seed,
        grid_m: est.grid_m,
        orderings: est.orderings,
        tolerance_mhz,
        providers: providers_summary,
    };
    config::write_pretty_json(&args.common.out.join("benchmark_summary.json"), &summary)?;

    for (name, ps) in &summary.providers {
        println!(
            "{name}: median final E {:.3e} MHz^2, {}/{} sets converged",
            ps.final_e_mhz2.median, ps.n_converged, ps.n_sets
        );
    }
    Ok(())
}

/// "<provider>_set<id>.csv" -> (provider, id)
fn parse_trace_name(path: &Path) -> Result<(String, u32)> {
    let bad = || Error::Parse {
        path: path.display().to_string(),
        message: "trace files are named <provider>_set<id>.csv".into(),
    };
    let stem = path.file_stem().and_then(|s| s.to_str()).ok_or_else(bad)?;
    let (provider, id) = stem.rsplit_once("_set").ok_or_else(bad)?;
    if provider.is_empty() {
        return Err(bad());
    }
    let id: u32 = id.parse().map_err(|_| bad())?;
    Ok((provider.to_string(), id))
}

pub fn run_report(args: &ReportArgs) -> Result<()> {
    let traces_dir = args.benchmark.join("traces");
    if !traces_dir.is_dir() {
        return Err(Error::invalid(format!(
            "{} has no traces directory; run benchmark first",
            args.benchmark.display()
        )));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&traces_dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!(
            "no trace files under {}",
            traces_dir.display()
        )));
    }

    config::prepare_out_dir(&args.common.out)?;
    let long_path = args.common.out.join("report_long.csv");
    let fail = |path: &Path| {
        let path = path.display().to_string();
        move |e: csv::Error| Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        }
    };
    let mut writer = csv::Writer::from_path(&long_path).map_err(fail(&long_path))?;
    writer
        .write_record(["provider", "set_id", "iteration", "metric", "value"])
        .map_err(fail(&long_path))?;

    const METRICS: [(&str, usize); 4] = [
        ("mean_fhat_MHz", 1),
        ("mean_E_MHz2", 2),
        ("mean_V_MHz2", 3),
        ("skip_rate", 4),
    ];
    for path in &paths {
        let (provider, set_id) = parse_trace_name(path)?;
        let mut reader = csv::Reader::from_path(path).map_err(fail(path))?;
        let headers = reader.headers().map_err(fail(path))?.clone();
        if headers.get(0) != Some("iteration") || headers.len() < 5 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!("unexpected trace header {headers:?}"),
            });
        }
        for record in reader.records() {
            let record = record.map_err(fail(path))?;
            let iteration = record.get(0).unwrap_or_default().to_string();
            for (metric, col) in METRICS {
                let value = record.get(col).ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    message: format!("row {iteration} is missing column {col}"),
                })?;
                // validate numbers so malformed traces fail here, by name
                value.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    message: format!("{metric} value {value:?} is not a number"),
                })?;
                writer
                    .write_record([
                        provider.as_str(),
                        &set_id.to_string(),
                        &iteration,
                        metric,
                        value,
                    ])
                    .map_err(fail(&long_path))?;
            }
        }
    }
    writer.flush()?;

    let summary_path = args.benchmark.join("benchmark_summary.json");
    let text = std::fs::read_to_string(&summary_path)?;
    let summary: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: summary_path.display().to_string(),
        message: e.to_string(),
    })?;
    config::write_pretty_json(&args.common.out.join("report_summary.json"), &summary)?;

    #[derive(Serialize)]
    struct Resolved {
        command: &'static str,
        seed: u64,
        benchmark: String,
    }
    config::write_pretty_json(
        &args.common.out.join("config.json"),
        &Resolved {
            command: "report",
            seed: args.common.seed,
            benchmark: args.benchmark.display().to_string(),
        },
    )?;

    println!(
        "consolidated {} trace files into {}",
        paths.len(),
        long_path.display()
    );
    Ok(())
}
