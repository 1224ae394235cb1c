//! The `bifseg` command line: synthetic data, training, calibration,
//! evaluation, prediction, the gradient suite and fold reports.
//!
//! Every command prints machine-readable `key=value` lines, then a blank
//! line and an aligned table for people. Exit codes: 0 success, 1 usage or
//! configuration error, 2 data or format error, 3 numeric failure.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use indexmap::IndexMap;

pub use config::{model_config_text, KeyValues, MODEL_KEYS, TRAIN_KEYS};

use crate::autodiff::binarize;
use crate::data::{
    load_checkpoint, load_dataset, read_bsg1, synth_phantom, write_bsg1, write_dataset, Bsg1Array,
};
use crate::error::{Error, Result};
use crate::gradsuite::gradient_suite;
use crate::metrics::{aggregate_folds, MetricReport, METRIC_NAMES};
use crate::nn::{BifurcatedModel, ModelConfig, LUNG_THRESHOLD};
use crate::trainer::{calibrate_threshold, evaluate, train, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "bifseg", version, about = "Two-decoder lung infection segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic CT-like slices with lung and infection masks.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write its checkpoint (plus a `.cfg` sidecar).
    Train(TrainArgs),
    /// Pick the Dice-maximizing threshold on a dataset.
    Calibrate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = LUNG_THRESHOLD)]
        lung_threshold: f64,
    },
    /// Pooled metrics of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        threshold: f64,
        #[arg(long, default_value_t = LUNG_THRESHOLD)]
        lung_threshold: f64,
    },
    /// Segment one image.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the probability map instead of the binary mask.
        #[arg(long)]
        prob: bool,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = LUNG_THRESHOLD)]
        lung_threshold: f64,
    },
    /// Finite-difference check of every kernel, the inception block and the model.
    Gradcheck,
    /// Mean ± population std per metric over fold reports.
    Report {
        #[arg(long = "fold-metrics", num_args = 1.., required = true)]
        fold_metrics: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    /// `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-step loss log (tab-separated).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    adam_eps: Option<f64>,
    #[arg(long)]
    lung_threshold: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    encoder_d_rate: Option<usize>,
    #[arg(long)]
    decoder_end_d_rate: Option<usize>,
    #[arg(long)]
    fcn_channels: Option<usize>,
    #[arg(long)]
    w_lung: Option<f64>,
    #[arg(long)]
    w_aux: Option<f64>,
    #[arg(long)]
    w_fin: Option<f64>,
}

impl TrainArgs {
    fn key_values(&self) -> Result<KeyValues> {
        let keys: Vec<&str> = MODEL_KEYS.iter().chain(&TRAIN_KEYS).copied().collect();
        let mut kv = match &self.config {
            Some(p) => KeyValues::read(p, &keys)?,
            None => KeyValues::default(),
        };
        macro_rules! flag {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    kv.set(stringify!($f), v);
                }
            )*};
        }
        flag!(
            seed, epochs, batch_size, max_steps, learning_rate, beta1, beta2, adam_eps,
            lung_threshold, levels, base_channels, encoder_d_rate, decoder_end_d_rate,
            fcn_channels, w_lung, w_aux, w_fin
        );
        Ok(kv)
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Spec(_) => EXIT_USAGE,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Runs the command line `argv` (program name first), writing reports to
/// `out` and diagnostics to `err`.
pub fn run_with<I, S>(argv: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok((text, code)) => {
            let _ = out.write_all(text.as_bytes());
            code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// [`run_with`] on the process's stdout and stderr.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

fn dispatch(cmd: Command) -> Result<(String, i32)> {
    match cmd {
        Command::Synth { count, size, seed, out } => synth(count, size, seed, &out),
        Command::Train(args) => train_cmd(&args),
        Command::Calibrate { ckpt, data, lung_threshold } => calibrate(&ckpt, &data, lung_threshold),
        Command::Eval { ckpt, data, threshold, lung_threshold } => eval(&ckpt, &data, threshold, lung_threshold),
        Command::Predict { ckpt, image, out, prob, threshold, lung_threshold } => {
            predict(&ckpt, &image, &out, prob, threshold, lung_threshold)
        }
        Command::Gradcheck => gradcheck(),
        Command::Report { fold_metrics } => report(&fold_metrics),
    }
}

/// `key=value` lines, a blank line, then `rows` aligned in two columns.
fn render(pairs: &[(String, String)], rows: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{k}={v}");
    }
    if !rows.is_empty() {
        s.push('\n');
        let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<width$}  {v}");
        }
    }
    s
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_owned(), v.to_string())
}

fn synth(count: usize, size: usize, seed: u64, out: &Path) -> Result<(String, i32)> {
    let samples = synth_phantom(count, size, seed).map_err(|e| flag_error("--count/--size", e))?;
    let manifest = write_dataset(out, &samples)?;
    let infected = samples.iter().filter(|s| s.has_infection).count();
    let pairs = [
        kv("slices", count),
        kv("size", size),
        kv("infected", infected),
        kv("manifest", manifest.display()),
    ];
    Ok((render(&pairs, &[]), EXIT_OK))
}

fn flag_error(flag: &str, e: Error) -> Error {
    match e {
        Error::Spec(m) => Error::Spec(format!("{flag}: {m}")),
        Error::Config(m) => Error::Config(format!("{flag}: {m}")),
        other => other,
    }
}

/// The checkpoint's model configuration sidecar path.
pub fn sidecar_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}

fn load_model(ckpt: &Path) -> Result<BifurcatedModel> {
    let side = sidecar_path(ckpt);
    let settings = KeyValues::read(&side, &MODEL_KEYS).map_err(|e| match e {
        Error::Config(m) => Error::Format(m),
        other => other,
    })?;
    let cfg = settings.model_config(ModelConfig::default()).map_err(|e| match e {
        Error::Config(m) => Error::Format(format!("{}: {m}", side.display())),
        other => other,
    })?;
    let params = load_checkpoint(ckpt)?;
    BifurcatedModel::from_params(cfg, params).map_err(|e| match e {
        Error::Contract(m) => Error::Format(format!("{}: {m}", ckpt.display())),
        other => other,
    })
}

fn train_cmd(args: &TrainArgs) -> Result<(String, i32)> {
    let settings = args.key_values()?;
    let data = load_dataset(&args.data)?;
    let first = data
        .first()
        .ok_or_else(|| Error::Data(format!("{}: no slices", args.data.display())))?;
    let (h, w) = first.size();
    let model_cfg = settings.model_config(ModelConfig { input_size: (h, w), ..ModelConfig::default() })?;
    if model_cfg.input_size != (h, w) {
        return Err(Error::Config(format!(
            "configured input {:?} but {} holds {h}x{w} slices",
            model_cfg.input_size,
            args.data.display()
        )));
    }
    let train_cfg = settings.train_config(TrainConfig::default())?;
    let mut model = BifurcatedModel::new(model_cfg, train_cfg.seed)?;
    let cfg = TrainConfig { checkpoint_path: Some(args.out.clone()), ..train_cfg };
    let log = train(&mut model, &data, &cfg)?;
    let side = sidecar_path(&args.out);
    fs::write(&side, model_config_text(&model_cfg)).map_err(|e| Error::io(&side, e))?;
    if let Some(p) = &args.log {
        log.write(p)?;
    }
    let last = log.records.last().ok_or_else(|| Error::Config("training ran zero steps".into()))?;
    let first = &log.records[0];
    let pairs = [
        kv("steps", log.records.len()),
        kv("first_total", format!("{:?}", first.total)),
        kv("final_total", format!("{:?}", last.total)),
        kv("checkpoint", args.out.display()),
    ];
    let rows = [
        kv("steps", log.records.len()),
        kv("first total loss", format!("{:.4}", first.total)),
        kv("final total loss", format!("{:.4}", last.total)),
        kv("final l_lung", format!("{:.4}", last.l_lung)),
        kv("final l_aux", format!("{:.4}", last.l_aux)),
        kv("final l_fin", format!("{:.4}", last.l_fin)),
    ];
    Ok((render(&pairs, &rows), EXIT_OK))
}

fn check_threshold(flag: &str, t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{flag} must be in (0, 1), got {t}")))
    }
}

fn calibrate(ckpt: &Path, data: &Path, lung_threshold: f64) -> Result<(String, i32)> {
    check_threshold("--lung-threshold", lung_threshold)?;
    let model = load_model(ckpt)?;
    let samples = load_dataset(data)?;
    let c = calibrate_threshold(&model, &samples, lung_threshold)?;
    let pairs = [kv("threshold", format!("{:?}", c.threshold)), kv("dice", format!("{:?}", c.dice))];
    let rows = [kv("threshold", format!("{:.2}", c.threshold)), kv("dice", format!("{:.4}", c.dice))];
    Ok((render(&pairs, &rows), EXIT_OK))
}

fn metric_output(r: &MetricReport) -> String {
    let pairs: Vec<_> = METRIC_NAMES.iter().zip(r.values()).map(|(n, v)| kv(n, format!("{v:?}"))).collect();
    let rows: Vec<_> = METRIC_NAMES.iter().zip(r.values()).map(|(n, v)| kv(n, format!("{v:.4}"))).collect();
    render(&pairs, &rows)
}

fn eval(ckpt: &Path, data: &Path, threshold: f64, lung_threshold: f64) -> Result<(String, i32)> {
    check_threshold("--threshold", threshold)?;
    check_threshold("--lung-threshold", lung_threshold)?;
    let model = load_model(ckpt)?;
    let samples = load_dataset(data)?;
    let r = evaluate(&model, &samples, threshold, lung_threshold)?;
    Ok((metric_output(&r), EXIT_OK))
}

fn predict(
    ckpt: &Path,
    image: &Path,
    out: &Path,
    prob: bool,
    threshold: f64,
    lung_threshold: f64,
) -> Result<(String, i32)> {
    check_threshold("--threshold", threshold)?;
    check_threshold("--lung-threshold", lung_threshold)?;
    let model = load_model(ckpt)?;
    let arr = read_bsg1(image)?;
    let x = arr.to_tensor().map_err(|e| in_file(image, e))?;
    let s = x.shape();
    if (s.n, s.c) != (1, 1) {
        return Err(Error::Data(format!("{}: expected a single-channel image, got {s}", image.display())));
    }
    model.config.check_input(s.h, s.w).map_err(|e| in_file(image, e))?;
    let p = model.predict(&x, lung_threshold)?.fin;
    let (written, positive) = if prob {
        (Bsg1Array::from_tensor(&p), None)
    } else {
        let mask = binarize(&p, threshold)?;
        let ones = mask.data().iter().filter(|&&v| v == 1.0).count();
        (Bsg1Array::from_mask(&mask)?, Some(ones))
    };
    // keep the input's rank
    let written = Bsg1Array::new(arr.dims.clone(), written.data)?;
    write_bsg1(out, &written)?;
    let mut pairs = vec![kv("output", out.display()), kv("kind", if prob { "probability" } else { "mask" })];
    if let Some(n) = positive {
        pairs.push(kv("positive_pixels", n));
    }
    Ok((render(&pairs, &[]), EXIT_OK))
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Shape(m) | Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn gradcheck() -> Result<(String, i32)> {
    let checks = gradient_suite()?;
    let failed = checks.iter().filter(|c| !c.passed()).count();
    let mut pairs = vec![kv("checks", checks.len()), kv("failed", failed)];
    let worst = |p: &str| {
        checks
            .iter()
            .filter(|c| c.precision == p)
            .map(|c| c.report.max_rel_error)
            .fold(0.0, f64::max)
    };
    pairs.push(kv("max_rel_error_f64", format!("{:?}", worst("f64"))));
    pairs.push(kv("max_rel_error_f32", format!("{:?}", worst("f32"))));
    let rows: Vec<_> = checks
        .iter()
        .map(|c| {
            let verdict = if c.passed() { "ok" } else { "FAIL" };
            kv(
                &format!("{} [{}]", c.name, c.precision),
                format!("{:.3e} < {:e}  {verdict}", c.report.max_rel_error, c.tolerance),
            )
        })
        .collect();
    let code = if failed == 0 { EXIT_OK } else { EXIT_NUMERIC };
    Ok((render(&pairs, &rows), code))
}

/// Reads `metric=value` lines; files may carry any subset of the metrics.
fn read_fold_file(path: &Path) -> Result<IndexMap<&'static str, f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut found = IndexMap::new();
    for (i, line) in text.lines().enumerate() {
        let Some((k, v)) = line.split_once('=') else { continue };
        let Some(name) = METRIC_NAMES.iter().find(|n| **n == k.trim()) else { continue };
        let v: f64 = v.trim().parse().map_err(|_| {
            Error::Data(format!("{} line {}: unparseable value for {name}", path.display(), i + 1))
        })?;
        found.insert(*name, v);
    }
    if found.is_empty() {
        return Err(Error::Data(format!("{}: no metric=value lines", path.display())));
    }
    Ok(found)
}

fn report(files: &[PathBuf]) -> Result<(String, i32)> {
    let folds = files.iter().map(|p| read_fold_file(p)).collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    let mut rows = Vec::new();
    for (i, name) in METRIC_NAMES.iter().enumerate() {
        let present: Vec<bool> = folds.iter().map(|f| f.contains_key(name)).collect();
        if present.iter().all(|p| !p) {
            continue;
        }
        if let Some(j) = present.iter().position(|p| !p) {
            return Err(Error::Data(format!("{}: missing {name}", files[j].display())));
        }
        // aggregate one metric at a time through the five-metric report
        let reports: Vec<MetricReport> = folds
            .iter()
            .map(|f| {
                let mut v = [0.0; 5];
                v[i] = f[name];
                MetricReport::from_values(v)
            })
            .collect();
        let (mean, std) = aggregate_folds(&reports)?;
        let (m, s) = (mean.values()[i], std.values()[i]);
        pairs.push(kv(&format!("{name}_mean"), format!("{m:?}")));
        pairs.push(kv(&format!("{name}_std"), format!("{s:?}")));
        rows.push(kv(name, format!("{m:.3} ± {s:.3}")));
    }
    pairs.insert(0, kv("folds", files.len()));
    Ok((render(&pairs, &rows), EXIT_OK))
}
