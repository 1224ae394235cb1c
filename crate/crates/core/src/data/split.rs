//! Volume-level k-fold plans and slice-level validation holdout.

use std::collections::HashSet;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.12;

/// Assignment of every volume to exactly one test fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// In input order.
    pub assignments: IndexMap<String, usize>,
}

impl FoldPlan {
    /// Volumes held out for testing in `fold`.
    pub fn test_volumes(&self, fold: usize) -> Vec<&str> {
        self.volumes_where(|f| f == fold)
    }

    pub fn train_volumes(&self, fold: usize) -> Vec<&str> {
        self.volumes_where(|f| f != fold)
    }

    pub fn fold_of(&self, volume: &str) -> Option<usize> {
        self.assignments.get(volume).copied()
    }

    fn volumes_where(&self, keep: impl Fn(usize) -> bool) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| keep(f))
            .map(|(v, _)| v.as_str())
            .collect()
    }
}

/// Seeded shuffle, then round-robin over `k` folds.
pub fn split_folds<S: AsRef<str>>(volume_ids: &[S], k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::Spec("fold count must be >= 1".into()));
    }
    if volume_ids.len() < k {
        return Err(Error::Contract(format!(
            "{} volumes cannot fill {k} folds",
            volume_ids.len()
        )));
    }
    let mut seen = HashSet::new();
    for v in volume_ids {
        if !seen.insert(v.as_ref()) {
            return Err(Error::Contract(format!("volume id {:?} listed twice", v.as_ref())));
        }
    }
    let mut order: Vec<usize> = (0..volume_ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; volume_ids.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    let assignments = volume_ids
        .iter()
        .zip(fold)
        .map(|(v, f)| (v.as_ref().to_owned(), f))
        .collect();
    Ok(FoldPlan { k, seed, assignments })
}

/// Moves a seeded random `round(fraction · n)` of `items` to validation.
/// Both halves keep the input order.
pub fn split_validation<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Spec(format!("validation fraction must be in (0, 1), got {fraction}")));
    }
    let n_val = validation_count(items.len(), fraction);
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_val = vec![false; items.len()];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (item, v) in items.iter().zip(is_val) {
        if v { val.push(item.clone()) } else { train.push(item.clone()) }
    }
    Ok((train, val))
}

pub fn validation_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}
