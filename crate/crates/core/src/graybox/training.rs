//! Adam training of the hybrid model with a held-out split and periodic
//! evaluation. Deterministic for a fixed seed: the split, any minibatch
//! sampling, and the gradient reduction all derive from it.

use super::{gb_loss, gb_loss_gradient, gb_mse, GrayboxParams};
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, AdamState, LossKind};
use crate::seed::StreamSeed;
use crate::sim::DatasetRecord;
use rand::seq::SliceRandom;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub iterations: u64,
    /// Fraction of records used for training; the rest are held out.
    pub split_ratio: f64,
    /// Held-out loss is evaluated (and a rollback snapshot taken) every this
    /// many iterations.
    pub eval_every: u64,
    /// None trains on the full batch every iteration.
    pub batch_size: Option<usize>,
    pub adam: AdamConfig,
    pub loss: LossKind,
    pub seed: StreamSeed,
}

impl TrainOptions {
    pub fn new(seed: StreamSeed) -> Self {
        TrainOptions {
            iterations: 20_000,
            split_ratio: 0.9,
            eval_every: 1000,
            batch_size: None,
            adam: AdamConfig::default(),
            loss: LossKind::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio <= 1.0) {
            return Err(Error::invalid(format!(
                "split ratio must lie in (0, 1], got {}",
                self.split_ratio
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Training loss after each completed iteration.
    pub train_loss: Vec<f64>,
    /// (iteration, held-out loss) at iteration 0 and every eval point.
    pub test_loss: Vec<(u64, f64)>,
    pub final_train_mse: f64,
    /// None when the split leaves no held-out records (ratio = 1).
    pub final_test_mse: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    /// True when training aborted on a non-finite loss or gradient; the
    /// returned parameters are then the last evaluation snapshot.
    pub diverged: bool,
}

/// Shuffled disjoint train/test index split. Test size is n·(1−ratio)
/// rounded, but at least one record on each side whenever ratio < 1.
pub fn split_indices(n: usize, split_ratio: f64, seed: StreamSeed) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.rng());
    let mut n_test = (n as f64 * (1.0 - split_ratio)).round() as usize;
    if split_ratio < 1.0 && n_test == 0 && n > 1 {
        n_test = 1;
    }
    if n_test >= n {
        n_test = n - 1;
    }
    let mut test = idx.split_off(n - n_test);
    idx.sort_unstable();
    test.sort_unstable();
    (idx, test)
}

/// Train `gb` on `records`. Returns the trained model and the loss history.
/// On divergence the model rolls back to the last evaluation snapshot and the
/// report carries `diverged = true`; only invalid inputs return an error.
pub fn train(
    gb: GrayboxParams,
    records: &[DatasetRecord],
    opts: &TrainOptions,
) -> Result<(GrayboxParams, TrainReport)> {
    opts.validate()?;
    gb.validate()?;
    if records.len() < 10 {
        return Err(Error::invalid(format!(
            "training needs at least 10 records, got {}",
            records.len()
        )));
    }

    let (train_idx, test_idx) = split_indices(records.len(), opts.split_ratio, opts.seed.child(0));
    let train_set: Vec<DatasetRecord> = train_idx.iter().map(|&i| records[i].clone()).collect();
    let test_set: Vec<DatasetRecord> = test_idx.iter().map(|&i| records[i].clone()).collect();

    let mut gb = gb;
    let mut state = AdamState::new(&gb.net);
    let mut batch_rng = opts.seed.child(1).rng();
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(opts.iterations as usize),
        test_loss: Vec::new(),
        final_train_mse: f64::NAN,
        final_test_mse: None,
        n_train: train_set.len(),
        n_test: test_set.len(),
        diverged: false,
    };
    if !test_set.is_empty() {
        report.test_loss.push((0, gb_loss(&gb, &test_set, opts.loss)?));
    }
    let mut last_good = gb.clone();

    for it in 1..=opts.iterations {
        let stepped = step_batch(&gb, &train_set, opts, &mut batch_rng).and_then(
            |(loss, grads)| {
                adam_step(&mut gb.net, &grads, &mut state, &opts.adam)?;
                Ok(loss)
            },
        );
        match stepped {
            Ok(loss) => report.train_loss.push(loss),
            Err(Error::NumericOverflow(_)) => {
                report.diverged = true;
                gb = last_good;
                break;
            }
            Err(e) => return Err(e),
        }
        if it % opts.eval_every == 0 {
            if !test_set.is_empty() {
                report
                    .test_loss
                    .push((it, gb_loss(&gb, &test_set, opts.loss)?));
            }
            last_good = gb.clone();
        }
    }

    report.final_train_mse = gb_mse(&gb, &train_set)?;
    report.final_test_mse = if test_set.is_empty() {
        None
    } else {
        Some(gb_mse(&gb, &test_set)?)
    };
    Ok((gb, report))
}

fn step_batch(
    gb: &GrayboxParams,
    train_set: &[DatasetRecord],
    opts: &TrainOptions,
    rng: &mut impl rand::Rng,
) -> Result<(f64, crate::nn::GradBuffer)> {
    match opts.batch_size {
        Some(b) if b < train_set.len() => {
            let chosen = rand::seq::index::sample(rng, train_set.len(), b);
            let batch: Vec<DatasetRecord> =
                chosen.iter().map(|i| train_set[i].clone()).collect();
            gb_loss_gradient(gb, &batch, opts.loss)
        }
        _ => gb_loss_gradient(gb, train_set, opts.loss),
    }
}

/// Loss history as CSV with columns iteration, train_loss, test_loss. The
/// held-out column is filled only on rows where it was evaluated.
pub fn write_loss_csv(report: &TrainReport, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let fail = |e: csv::Error| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    writer
        .write_record(["iteration", "train_loss", "test_loss"])
        .map_err(fail)?;
    let test: std::collections::HashMap<u64, f64> = report.test_loss.iter().copied().collect();
    if let Some(l0) = test.get(&0) {
        writer
            .write_record(["0".into(), String::new(), format!("{l0:.16e}")])
            .map_err(fail)?;
    }
    for (i, loss) in report.train_loss.iter().enumerate() {
        let it = i as u64 + 1;
        let test_cell = test.get(&it).map(|l| format!("{l:.16e}")).unwrap_or_default();
        writer
            .write_record([it.to_string(), format!("{loss:.16e}"), test_cell])
            .map_err(fail)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_dataset, DatasetPlan, NoiseConfig};

    fn exact_dataset(sets: usize, taus: usize, seed: u64) -> Vec<DatasetRecord> {
        let plan = DatasetPlan {
            n_frequency_sets: sets,
            taus_per_set: taus,
            exact_probabilities: true,
            mc_shots: 1,
            ..DatasetPlan::default()
        };
        generate_dataset(&plan, &NoiseConfig::noiseless(), StreamSeed::new(seed)).unwrap()
    }

    #[test]
    fn split_covers_everything_without_overlap() {
        let (train, test) = split_indices(100, 0.9, StreamSeed::new(1));
        assert_eq!(train.len(), 90);
        assert_eq!(test.len(), 10);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        // no held-out set at ratio 1
        let (train, test) = split_indices(50, 1.0, StreamSeed::new(2));
        assert_eq!((train.len(), test.len()), (50, 0));
        // tiny datasets still keep one record on each side
        let (train, test) = split_indices(3, 0.99, StreamSeed::new(3));
        assert_eq!((train.len(), test.len()), (2, 1));
    }

    #[test]
    fn training_reduces_loss_and_is_reproducible() {
        let records = exact_dataset(2, 12, 4);
        let gb = GrayboxParams::for_dataset(&records, &[12, 8], StreamSeed::new(5)).unwrap();
        let opts = TrainOptions {
            iterations: 400,
            eval_every: 100,
            adam: AdamConfig {
                learning_rate: 5e-3,
                ..AdamConfig::default()
            },
            ..TrainOptions::new(StreamSeed::new(6))
        };
        let (trained, report) = train(gb.clone(), &records, &opts).unwrap();
        assert!(!report.diverged);
        assert_eq!(report.train_loss.len(), 400);
        assert_eq!(report.n_train + report.n_test, records.len());
        let first = report.train_loss[0];
        let last = *report.train_loss.last().unwrap();
        assert!(last < first, "loss went {first} -> {last}");
        assert!(report.final_test_mse.unwrap().is_finite());
        // bitwise reproducible
        let (trained2, report2) = train(gb, &records, &opts).unwrap();
        assert_eq!(trained, trained2);
        assert_eq!(report, report2);
    }

    #[test]
    fn zero_iterations_returns_initial_model_with_initial_losses() {
        let records = exact_dataset(1, 12, 7);
        let gb = GrayboxParams::for_dataset(&records, &[6], StreamSeed::new(8)).unwrap();
        let opts = TrainOptions {
            iterations: 0,
            ..TrainOptions::new(StreamSeed::new(9))
        };
        let (out, report) = train(gb.clone(), &records, &opts).unwrap();
        assert_eq!(out, gb);
        assert!(report.train_loss.is_empty());
        assert_eq!(report.test_loss.len(), 1);
        assert!(report.final_train_mse.is_finite());
    }

    #[test]
    fn minibatch_training_is_deterministic() {
        let records = exact_dataset(2, 10, 10);
        let gb = GrayboxParams::for_dataset(&records, &[8], StreamSeed::new(11)).unwrap();
        let opts = TrainOptions {
            iterations: 50,
            batch_size: Some(4),
            ..TrainOptions::new(StreamSeed::new(12))
        };
        let (a, ra) = train(gb.clone(), &records, &opts).unwrap();
        let (b, rb) = train(gb, &records, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.train_loss, rb.train_loss);
    }

    #[test]
    fn overflow_rolls_back_and_flags_divergence() {
        let records = exact_dataset(1, 16, 13);
        let gb = GrayboxParams::for_dataset(&records, &[6], StreamSeed::new(14)).unwrap();
        // a learning rate of f64::MAX drives the weights past infinity within
        // a few steps
        let opts = TrainOptions {
            iterations: 50,
            adam: AdamConfig {
                learning_rate: f64::MAX,
                ..AdamConfig::default()
            },
            ..TrainOptions::new(StreamSeed::new(15))
        };
        let (out, report) = train(gb.clone(), &records, &opts).unwrap();
        assert!(report.diverged);
        assert!(report.train_loss.len() < 50);
        // no eval point was reached, so the rollback target is the start
        assert_eq!(out, gb);
    }

    #[test]
    fn too_few_records_is_invalid() {
        let records = exact_dataset(1, 6, 16);
        let gb = GrayboxParams::for_dataset(&records, &[4], StreamSeed::new(17)).unwrap();
        let opts = TrainOptions::new(StreamSeed::new(18));
        assert!(matches!(
            train(gb, &records[..6], &opts),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn loss_csv_layout() {
        let report = TrainReport {
            train_loss: vec![-1.0, -2.0, -3.0],
            test_loss: vec![(0, -0.5), (2, -1.5)],
            final_train_mse: 1e-4,
            final_test_mse: Some(2e-4),
            n_train: 9,
            n_test: 1,
            diverged: false,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        write_loss_csv(&report, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,train_loss,test_loss");
        assert_eq!(lines.len(), 5); // header + iteration 0 + 3 iterations
        assert!(lines[1].starts_with("0,,"));
        assert!(lines[3].starts_with("2,"));
        assert!(!lines[3].ends_with(','));
        assert!(lines[2].ends_with(','));
    }
}
