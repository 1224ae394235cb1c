//! k-fold protocol: volume-level folds, slice-level validation holdout,
//! several seeded runs per fold.

use indexmap::IndexSet;

use super::eval::{calibrate_threshold, evaluate};
use super::train::{train, TrainConfig};
use crate::data::{split_folds, split_validation, SliceSample};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_folds, MetricReport};
use crate::nn::{BifurcatedModel, ModelConfig};

pub const DEFAULT_RUN_SEEDS: [u64; 3] = [0, 1, 2];

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub k: usize,
    pub fold_seed: u64,
    pub validation_fraction: f64,
    /// One training run per seed in every fold.
    pub run_seeds: Vec<u64>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: crate::data::DEFAULT_FOLDS,
            fold_seed: 0,
            validation_fraction: crate::data::DEFAULT_VALIDATION_FRACTION,
            run_seeds: DEFAULT_RUN_SEEDS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub fold: usize,
    pub seed: u64,
    pub threshold: f64,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub runs: Vec<RunResult>,
    /// Per fold, the mean over its runs.
    pub folds: Vec<MetricReport>,
    pub mean: MetricReport,
    pub std: MetricReport,
}

/// Trains, calibrates and tests every fold. `train_cfg.seed` is replaced by
/// each run seed, which also seeds model initialization and the validation
/// split.
pub fn cross_validate(
    samples: &[SliceSample],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    cv: &CvConfig,
) -> Result<CvReport> {
    if cv.run_seeds.is_empty() {
        return Err(Error::Config("cross-validation needs at least one run seed".into()));
    }
    let volumes: IndexSet<&str> = samples.iter().map(|s| s.volume_id.as_str()).collect();
    let volumes: Vec<&str> = volumes.into_iter().collect();
    let plan = split_folds(&volumes, cv.k, cv.fold_seed)?;
    let mut runs = Vec::new();
    let mut folds = Vec::with_capacity(cv.k);
    for fold in 0..cv.k {
        let (test, pool): (Vec<SliceSample>, Vec<SliceSample>) = samples
            .iter()
            .cloned()
            .partition(|s| plan.fold_of(&s.volume_id) == Some(fold));
        let mut fold_runs = Vec::with_capacity(cv.run_seeds.len());
        for &seed in &cv.run_seeds {
            let (train_set, val_set) = split_validation(&pool, cv.validation_fraction, seed)?;
            let mut model = BifurcatedModel::new(*model_cfg, seed)?;
            let cfg = TrainConfig { seed, checkpoint_path: None, ..train_cfg.clone() };
            train(&mut model, &train_set, &cfg)?;
            let cal = calibrate_threshold(&model, &val_set, cfg.lung_threshold)?;
            let report = evaluate(&model, &test, cal.threshold, cfg.lung_threshold)?;
            fold_runs.push(report);
            runs.push(RunResult { fold, seed, threshold: cal.threshold, report });
        }
        folds.push(aggregate_folds(&fold_runs)?.0);
    }
    let (mean, std) = aggregate_folds(&folds)?;
    Ok(CvReport { runs, folds, mean, std })
}
