//! JSON config file sections and small output helpers shared by the
//! commands. Every section tolerates omitted fields (defaults apply) and
//! rejects unknown keys so typos fail loudly.

use graysense::bayes::LikelihoodMode;
use graysense::nn::LossKind;
use graysense::sim::{DatasetPlan, NoiseConfig};
use graysense::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub plan: Option<DatasetPlan>,
    pub noise: Option<NoiseConfig>,
    pub train: Option<TrainSection>,
    pub estimate: Option<EstimateSection>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: u64,
    pub split_ratio: f64,
    pub eval_every: u64,
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub loss: LossKind,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            iterations: 20_000,
            split_ratio: 0.9,
            eval_every: 1000,
            batch_size: None,
            learning_rate: 1e-3,
            hidden: vec![32, 32],
            loss: LossKind::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    /// Prior bounds; required (here or as flags) for estimate/benchmark.
    pub f_min_mhz: Option<f64>,
    pub f_max_mhz: Option<f64>,
    pub grid_m: usize,
    pub orderings: usize,
    pub mode: LikelihoodMode,
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection {
            f_min_mhz: None,
            f_max_mhz: None,
            grid_m: 5000,
            orderings: 100,
            mode: LikelihoodMode::Auto,
        }
    }
}

/// Estimator settings with the prior bounds pinned down.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedEstimate {
    pub f_min_mhz: f64,
    pub f_max_mhz: f64,
    pub grid_m: usize,
    pub orderings: usize,
    pub mode: LikelihoodMode,
}

pub fn prepare_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

pub fn write_pretty_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Five-number summary with linear interpolation between order statistics.
pub fn quartiles(values: &[f64]) -> Result<Quartiles> {
    if values.is_empty() {
        return Err(Error::invalid("cannot summarize an empty sample"));
    }
    let mut xs = values.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let at = |p: f64| -> f64 {
        let h = (xs.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        xs[lo] + (xs[hi] - xs[lo]) * (h - lo as f64)
    };
    Ok(Quartiles {
        min: xs[0],
        q1: at(0.25),
        median: at(0.5),
        q3: at(0.75),
        max: xs[xs.len() - 1],
    })
}
