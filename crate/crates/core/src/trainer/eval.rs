use crate::autodiff::binarize;
use crate::data::{stack_samples, SliceSample};
use crate::error::{Error, Result};
use crate::metrics::{confusion_counts, metrics_from_counts, ConfusionCounts, MetricReport};
use crate::nn::BifurcatedModel;
use crate::tensor::Tensor;

/// Slices per inference batch; results do not depend on it.
const INFER_BATCH: usize = 4;

/// Candidate thresholds `0.01, 0.02, …, 0.99`.
pub fn threshold_grid() -> impl Iterator<Item = f64> {
    (1..=99).map(|k| k as f64 / 100.0)
}

/// Final infection probability map of every slice, `(1, 1, h, w)` each.
pub fn predict_final(model: &BifurcatedModel, samples: &[SliceSample], lung_threshold: f64) -> Result<Vec<Tensor<f32>>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(INFER_BATCH) {
        let refs: Vec<&SliceSample> = chunk.iter().collect();
        let (images, _, _) = stack_samples(&refs)?;
        let p = model.predict(&images, lung_threshold)?;
        for i in 0..chunk.len() {
            out.push(p.fin.slice_batch(i, i + 1)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub threshold: f64,
    pub dice: f64,
}

/// Sweeps [`threshold_grid`], summing confusion counts over all slices, and
/// keeps the Dice maximizer; ties go to the lower threshold.
pub fn calibrate_from_probs(probs: &[Tensor<f32>], gts: &[Tensor<f32>]) -> Result<Calibration> {
    if probs.is_empty() {
        return Err(Error::Contract("calibration needs at least one slice".into()));
    }
    if probs.len() != gts.len() {
        return Err(Error::Contract(format!(
            "{} probability maps for {} ground-truth masks",
            probs.len(),
            gts.len()
        )));
    }
    let mut best: Option<Calibration> = None;
    for t in threshold_grid() {
        let counts = summed_counts(probs, gts, t)?;
        let dice = metrics_from_counts(&counts).dice;
        if best.is_none_or(|b| dice > b.dice) {
            best = Some(Calibration { threshold: t, dice });
        }
    }
    Ok(best.expect("grid is non-empty"))
}

fn summed_counts(probs: &[Tensor<f32>], gts: &[Tensor<f32>], t: f64) -> Result<ConfusionCounts> {
    probs
        .iter()
        .zip(gts)
        .map(|(p, g)| confusion_counts(&binarize(p, t)?, g))
        .sum()
}

pub fn calibrate_threshold(model: &BifurcatedModel, validation: &[SliceSample], lung_threshold: f64) -> Result<Calibration> {
    if validation.is_empty() {
        return Err(Error::Contract("validation set is empty".into()));
    }
    let probs = predict_final(model, validation, lung_threshold)?;
    let gts: Vec<Tensor<f32>> = validation.iter().map(|s| s.infection_mask.clone()).collect();
    calibrate_from_probs(&probs, &gts)
}

/// Pools confusion counts over all slices at `threshold`.
pub fn evaluate_probs(probs: &[Tensor<f32>], gts: &[Tensor<f32>], threshold: f64) -> Result<MetricReport> {
    if probs.is_empty() {
        return Err(Error::Contract("evaluation needs at least one slice".into()));
    }
    if probs.len() != gts.len() {
        return Err(Error::Contract(format!(
            "{} probability maps for {} ground-truth masks",
            probs.len(),
            gts.len()
        )));
    }
    Ok(metrics_from_counts(&summed_counts(probs, gts, threshold)?))
}

pub fn evaluate(model: &BifurcatedModel, test: &[SliceSample], threshold: f64, lung_threshold: f64) -> Result<MetricReport> {
    if test.is_empty() {
        return Err(Error::Contract("test set is empty".into()));
    }
    let probs = predict_final(model, test, lung_threshold)?;
    let gts: Vec<Tensor<f32>> = test.iter().map(|s| s.infection_mask.clone()).collect();
    evaluate_probs(&probs, &gts, threshold)
}
