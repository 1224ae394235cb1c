use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use crate::autodiff::Graph;
use crate::data::{save_checkpoint, stack_samples, SliceSample};
use crate::error::{Error, Result};
use crate::loss::{total_loss, LossWeights};
use crate::nn::{BifurcatedModel, LUNG_THRESHOLD};
use crate::tensor::Tensor;

pub const DEFAULT_EPOCHS: usize = 125;
pub const DEFAULT_BATCH_SIZE: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many steps even if epochs remain.
    pub max_steps: Option<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
    pub lung_threshold: f64,
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            max_steps: None,
            adam: AdamConfig::default(),
            seed: 0,
            lung_threshold: LUNG_THRESHOLD,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        self.adam.validate()?;
        if !(self.lung_threshold > 0.0 && self.lung_threshold < 1.0) {
            return Err(Error::Config(format!(
                "lung_threshold must be in (0, 1), got {}",
                self.lung_threshold
            )));
        }
        Ok(())
    }

    /// Steps a run over `n` slices will take.
    pub fn total_steps(&self, n: usize) -> usize {
        let full = self.epochs * n.div_ceil(self.batch_size);
        self.max_steps.map_or(full, |m| m.min(full))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub l_lung: f64,
    pub l_aux: f64,
    pub l_fin: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

pub const TRAIN_LOG_HEADER: &str = "step\tl_lung\tl_aux\tl_fin\ttotal";

impl TrainLog {
    /// Tab-separated with a header row; floats print in shortest round-trip
    /// form.
    pub fn to_tsv(&self) -> String {
        let mut s = format!("{TRAIN_LOG_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{}\t{:?}\t{:?}\t{:?}\t{:?}",
                r.step, r.l_lung, r.l_aux, r.l_fin, r.total
            );
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 && line == TRAIN_LOG_HEADER || line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Data(format!("train log line {}: {line:?}", i + 1));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            records.push(StepRecord {
                step: f[0].parse().map_err(|_| bad())?,
                l_lung: num(f[1])?,
                l_aux: num(f[2])?,
                l_fin: num(f[3])?,
                total: num(f[4])?,
            });
        }
        Ok(TrainLog { records })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// The three loss terms of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub l_lung: f64,
    pub l_aux: f64,
    pub l_fin: f64,
}

/// Forward and backward over one batch. Returns the loss terms and the
/// gradient of the weighted total for every parameter, in parameter order.
pub fn loss_and_grads(
    model: &BifurcatedModel,
    images: &Tensor<f32>,
    lung_gt: &Tensor<f32>,
    infection_gt: &Tensor<f32>,
    weights: &LossWeights,
    lung_threshold: f64,
) -> Result<(StepLosses, Vec<Tensor<f32>>)> {
    let mut g = Graph::<f32>::new();
    let nodes = model.params.bind(&mut g, true);
    let x = g.constant(images.clone());
    let out = model.forward(&mut g, &nodes, x, lung_threshold)?;
    let lung_t = g.constant(lung_gt.clone());
    let inf_t = g.constant(infection_gt.clone());
    let l_lung = g.bce(out.lung, lung_t)?;
    let l_aux = g.bce(out.aux, inf_t)?;
    let l_fin = g.bce(out.fin, inf_t)?;
    let total = crate::loss::total_loss_node(&mut g, l_lung, l_aux, l_fin, weights)?;
    g.backward(total)?;
    let item = |id| g.value(id).item().map(|v: f32| v as f64);
    let losses = StepLosses {
        l_lung: item(l_lung)?,
        l_aux: item(l_aux)?,
        l_fin: item(l_fin)?,
    };
    Ok((losses, model.params.gradients(&g, &nodes)))
}

/// Seeded minibatch Adam over `dataset`; updates `model` in place and writes
/// the checkpoint if a path is configured.
pub fn train(model: &mut BifurcatedModel, dataset: &[SliceSample], cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let (h, w) = dataset[0].size();
    model.config.check_input(h, w)?;
    if let Some(s) = dataset.iter().find(|s| s.size() != (h, w)) {
        return Err(Error::Shape(format!(
            "slice from {} is {:?}, expected {:?}",
            s.volume_id,
            s.size(),
            (h, w)
        )));
    }
    let weights = model.config.loss_weights;
    let total_steps = cfg.total_steps(dataset.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&model.params);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let step = log.records.len() + 1;
            if step > total_steps {
                break 'epochs;
            }
            let batch: Vec<&SliceSample> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (images, lungs, infections) = stack_samples(&batch)?;
            let (l, grads) =
                loss_and_grads(model, &images, &lungs, &infections, &weights, cfg.lung_threshold)
                    .map_err(|e| at_step(step, e))?;
            if let Some(name) = model
                .params
                .names()
                .zip(&grads)
                .find(|(_, g)| !g.all_finite())
                .map(|(n, _)| n.to_owned())
            {
                return Err(Error::Numeric(format!("step {step}: gradient of {name} is not finite")));
            }
            let total = total_loss(l.l_lung, l.l_aux, l.l_fin, &weights).map_err(|e| at_step(step, e))?;
            adam_step(&mut model.params, &grads, &mut state, &cfg.adam)?;
            log.records.push(StepRecord {
                step,
                l_lung: l.l_lung,
                l_aux: l.l_aux,
                l_fin: l.l_fin,
                total,
            });
        }
    }
    if let Some(path) = &cfg.checkpoint_path {
        save_checkpoint(path, &model.params)?;
    }
    Ok(log)
}

fn at_step(step: usize, e: Error) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("step {step}: {m}")),
        Error::Contract(m) if m.contains("finite") => Error::Numeric(format!("step {step}: {m}")),
        other => other,
    }
}
