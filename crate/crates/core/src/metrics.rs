//! Pixelwise confusion counts, the five overlap metrics, and fold aggregation.

use std::fmt;
use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// TP/FP/FN/TN tallies over a set of pixels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), Add::add)
    }
}

fn is_one<T: Element>(v: T, what: &str) -> Result<bool> {
    if v == T::one() {
        Ok(true)
    } else if v == T::zero() {
        Ok(false)
    } else {
        Err(Error::Data(format!("{what} mask must be binary, found {v:?}")))
    }
}

/// Counts agreement between a predicted and a ground-truth binary mask.
pub fn confusion_counts<T: Element>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<ConfusionCounts> {
    if pred.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "prediction {} and ground truth {} differ",
            pred.shape(),
            gt.shape()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (is_one(p, "prediction")?, is_one(g, "ground-truth")?) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Sensitivity, specificity, IoU, Dice and PPV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub sensitivity: f64,
    pub specificity: f64,
    pub iou: f64,
    pub dice: f64,
    pub ppv: f64,
}

/// Metric names in report order, as printed in `key=value` output.
pub const METRIC_NAMES: [&str; 5] = ["sensitivity", "specificity", "iou", "dice", "ppv"];

impl MetricReport {
    pub fn values(&self) -> [f64; 5] {
        [
            self.sensitivity,
            self.specificity,
            self.iou,
            self.dice,
            self.ppv,
        ]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        MetricReport {
            sensitivity: v[0],
            specificity: v[1],
            iou: v[2],
            dice: v[3],
            ppv: v[4],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        METRIC_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values()[i])
    }

    /// One `name=value` line per metric, values in shortest round-trip form.
    pub fn to_key_values(&self) -> String {
        METRIC_NAMES
            .iter()
            .zip(self.values())
            .map(|(n, v)| format!("{n}={v:?}\n"))
            .collect()
    }

    /// Parses `name=value` lines; other lines are ignored. All five metrics
    /// must be present.
    pub fn parse_key_values(text: &str) -> Result<Self> {
        let mut found = [None; 5];
        for line in text.lines() {
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            if let Some(i) = METRIC_NAMES.iter().position(|n| *n == k.trim()) {
                let v: f64 = v.trim().parse().map_err(|_| {
                    Error::Data(format!("metric {} has unparseable value {v:?}", k.trim()))
                })?;
                found[i] = Some(v);
            }
        }
        let mut out = [0.0; 5];
        for (i, v) in found.iter().enumerate() {
            out[i] = v.ok_or_else(|| Error::Data(format!("missing metric {}", METRIC_NAMES[i])))?;
        }
        Ok(Self::from_values(out))
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, v) in METRIC_NAMES.iter().zip(self.values()) {
            writeln!(f, "{n:<12} {v:.4}")?;
        }
        Ok(())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    num as f64 / den as f64
}

/// Metrics from counts.
///
/// An empty prediction of an empty target scores 1 everywhere. When only one
/// side is empty, sensitivity (no true positives exist) or PPV (nothing was
/// predicted) is 0.
pub fn metrics_from_counts(c: &ConfusionCounts) -> MetricReport {
    let nothing_positive = c.tp + c.fp + c.fn_ == 0;
    let (sensitivity, iou, dice, ppv) = if nothing_positive {
        (1.0, 1.0, 1.0, 1.0)
    } else {
        (
            if c.tp + c.fn_ == 0 { 0.0 } else { ratio(c.tp, c.tp + c.fn_) },
            ratio(c.tp, c.tp + c.fp + c.fn_),
            ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
            if c.tp + c.fp == 0 { 0.0 } else { ratio(c.tp, c.tp + c.fp) },
        )
    };
    let specificity = if c.tn + c.fp == 0 {
        1.0
    } else {
        ratio(c.tn, c.tn + c.fp)
    };
    MetricReport {
        sensitivity,
        specificity,
        iou,
        dice,
        ppv,
    }
}

/// Per-metric mean and population standard deviation.
pub fn aggregate_folds(reports: &[MetricReport]) -> Result<(MetricReport, MetricReport)> {
    if reports.is_empty() {
        return Err(Error::Contract("aggregate_folds needs at least one report".into()));
    }
    let n = reports.len() as f64;
    let mut mean = [0.0; 5];
    for r in reports {
        for (m, v) in mean.iter_mut().zip(r.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 5];
    for r in reports {
        for ((s, v), m) in var.iter_mut().zip(r.values()).zip(mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.map(|s| (s / n).sqrt());
    Ok((MetricReport::from_values(mean), MetricReport::from_values(std)))
}

/// Aligned `metric  mean ± std` table.
pub fn format_aggregate(mean: &MetricReport, std: &MetricReport) -> String {
    METRIC_NAMES
        .iter()
        .zip(mean.values().into_iter().zip(std.values()))
        .map(|(n, (m, s))| format!("{n:<12} {m:.3} ± {s:.3}\n"))
        .collect()
}
