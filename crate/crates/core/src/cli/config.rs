//! `key = value` run configuration. Keys mirror the long flags with `-`
//! spelled `_`; flags override the file.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::nn::ModelConfig;
use crate::trainer::TrainConfig;

/// Model keys, in the order the checkpoint sidecar writes them.
pub const MODEL_KEYS: [&str; 10] = [
    "levels",
    "base_channels",
    "encoder_d_rate",
    "decoder_end_d_rate",
    "fcn_channels",
    "w_lung",
    "w_aux",
    "w_fin",
    "input_height",
    "input_width",
];

pub const TRAIN_KEYS: [&str; 9] = [
    "epochs",
    "batch_size",
    "max_steps",
    "learning_rate",
    "beta1",
    "beta2",
    "adam_eps",
    "seed",
    "lung_threshold",
];

/// Raw `key -> value` pairs with the origin of each, for error messages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: IndexMap<String, (String, String)>,
}

impl KeyValues {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &str, allowed: &[&str]) -> Result<Self> {
        let mut kv = KeyValues::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = format!("{origin} line {}", i + 1);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{at}: expected `key = value`, got {raw:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if !allowed.contains(&k) {
                return Err(Error::Config(format!("{at}: unknown key {k:?}")));
            }
            if kv.entries.contains_key(k) {
                return Err(Error::Config(format!("{at}: duplicate key {k:?}")));
            }
            kv.entries.insert(k.to_owned(), (v.to_owned(), at));
        }
        Ok(kv)
    }

    pub fn read(path: &Path, allowed: &[&str]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string(), allowed)
    }

    /// Sets `key` from a command-line flag, replacing any file value.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let flag = format!("--{}", key.replace('_', "-"));
        self.entries.insert(key.to_owned(), (value.to_string(), flag));
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, at)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{at}: invalid value {v:?} for {key}"))),
        }
    }

    fn apply<T: std::str::FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn model_config(&self, base: ModelConfig) -> Result<ModelConfig> {
        let mut c = base;
        self.apply("levels", &mut c.levels)?;
        self.apply("base_channels", &mut c.base_channels)?;
        self.apply("encoder_d_rate", &mut c.encoder_d_rate)?;
        self.apply("decoder_end_d_rate", &mut c.decoder_end_d_rate)?;
        self.apply("fcn_channels", &mut c.fcn_channels)?;
        let mut w = c.loss_weights;
        self.apply("w_lung", &mut w.lung)?;
        self.apply("w_aux", &mut w.aux)?;
        self.apply("w_fin", &mut w.fin)?;
        c.loss_weights = LossWeights::new(w.lung, w.aux, w.fin)?;
        self.apply("input_height", &mut c.input_size.0)?;
        self.apply("input_width", &mut c.input_size.1)?;
        c.validate()?;
        Ok(c)
    }

    pub fn train_config(&self, base: TrainConfig) -> Result<TrainConfig> {
        let mut c = base;
        self.apply("epochs", &mut c.epochs)?;
        self.apply("batch_size", &mut c.batch_size)?;
        if let Some(m) = self.get("max_steps")? {
            c.max_steps = Some(m);
        }
        self.apply("learning_rate", &mut c.adam.learning_rate)?;
        self.apply("beta1", &mut c.adam.beta1)?;
        self.apply("beta2", &mut c.adam.beta2)?;
        self.apply("adam_eps", &mut c.adam.eps)?;
        self.apply("seed", &mut c.seed)?;
        self.apply("lung_threshold", &mut c.lung_threshold)?;
        c.validate()?;
        Ok(c)
    }
}

/// The checkpoint sidecar: every model key, one per line.
pub fn model_config_text(c: &ModelConfig) -> String {
    let w = c.loss_weights;
    let values = [
        c.levels.to_string(),
        c.base_channels.to_string(),
        c.encoder_d_rate.to_string(),
        c.decoder_end_d_rate.to_string(),
        c.fcn_channels.to_string(),
        format!("{:?}", w.lung),
        format!("{:?}", w.aux),
        format!("{:?}", w.fin),
        c.input_size.0.to_string(),
        c.input_size.1.to_string(),
    ];
    let mut s = String::new();
    for (k, v) in MODEL_KEYS.iter().zip(values) {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_keys() -> Vec<&'static str> {
        MODEL_KEYS.iter().chain(&TRAIN_KEYS).copied().collect()
    }

    #[test]
    fn file_values_and_flag_override() {
        let text = "# run\nepochs = 3\nbatch_size=4  # inline\n\nlevels = 2\nw_fin = 1.5\n";
        let mut kv = KeyValues::parse(text, "run.cfg", &all_keys()).unwrap();
        kv.set("epochs", 9);
        let t = kv.train_config(TrainConfig::default()).unwrap();
        assert_eq!((t.epochs, t.batch_size, t.max_steps), (9, 4, None));
        let m = kv.model_config(ModelConfig::default()).unwrap();
        assert_eq!((m.levels, m.loss_weights.fin), (2, 1.5));
    }

    #[test]
    fn errors_name_the_origin() {
        let keys = all_keys();
        let msg = |r: Result<KeyValues>| match r {
            Err(Error::Config(m)) => m,
            other => panic!("{other:?}"),
        };
        assert!(msg(KeyValues::parse("bogus = 1", "a.cfg", &keys)).starts_with("a.cfg line 1: unknown key"));
        assert!(msg(KeyValues::parse("x\nepochs", "a.cfg", &keys)).starts_with("a.cfg line 1"));
        assert!(msg(KeyValues::parse("seed = 1\nseed = 2", "a.cfg", &keys)).contains("duplicate"));
        let mut kv = KeyValues::default();
        kv.set("batch_size", "many");
        match kv.train_config(TrainConfig::default()) {
            Err(Error::Config(m)) => assert!(m.starts_with("--batch-size"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sidecar_roundtrip() {
        let c = ModelConfig { levels: 2, base_channels: 8, input_size: (64, 32), ..ModelConfig::default() };
        let kv = KeyValues::parse(&model_config_text(&c), "ckpt.cfg", &MODEL_KEYS).unwrap();
        assert_eq!(kv.model_config(ModelConfig::default()).unwrap(), c);
    }
}
