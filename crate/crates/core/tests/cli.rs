use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use bifurcated_seg::cli::{model_config_text, run_with, sidecar_path, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use bifurcated_seg::data::{read_tensor, save_checkpoint, write_bsg1, write_dataset, Bsg1Array, SliceSample};
use bifurcated_seg::metrics::{confusion_counts, metrics_from_counts, ConfusionCounts, MetricReport};
use bifurcated_seg::nn::{BifurcatedModel, ModelConfig};
use bifurcated_seg::{Shape, Tensor};
use tempfile::TempDir;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn bifseg(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("bifseg").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn value<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key}= in {stdout}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn synth_writes_manifest_and_three_files_per_slice() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path().join("d");
    let r = bifseg(&["synth", "--count", "4", "--size", "64", "--seed", "1", "--out", s(&d)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert_eq!(value(&r.stdout, "slices"), "4");
    let names: Vec<String> = files(&d).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.len(), 13);
    assert_eq!(names.iter().filter(|n| n.ends_with(".bsg1")).count(), 12);
    assert!(names.contains(&"manifest.tsv".to_owned()));
}

#[test]
fn synth_is_idempotent() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(bifseg(&["synth", "--count", "3", "--size", "32", "--seed", "5", "--out", s(d)]).code, 0);
    }
    assert_eq!(files(&a), files(&b));
}

#[test]
fn help_version_and_usage_errors() {
    let r = bifseg(&["--help"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stdout.contains("Usage"));
    for sub in ["synth", "train", "calibrate", "eval", "predict", "gradcheck", "report"] {
        let r = bifseg(&[sub, "--help"]);
        assert_eq!(r.code, EXIT_OK, "{sub}");
        assert!(r.stdout.contains("Usage"), "{sub}");
    }
    assert_eq!(bifseg(&["--version"]).code, EXIT_OK);
    assert_eq!(bifseg(&[]).code, EXIT_USAGE);
    assert_eq!(bifseg(&["frobnicate"]).code, EXIT_USAGE);
    let r = bifseg(&["synth", "--count", "1", "--size", "16", "--out", "x", "--bogus"]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("--bogus"));
    assert_eq!(bifseg(&["synth", "--count", "many", "--size", "16", "--out", "x"]).code, EXIT_USAGE);
}

#[test]
fn errors_name_the_file_or_flag() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.bsck");
    let data = tmp.path().join("absent.tsv");
    let r = bifseg(&["eval", "--ckpt", s(&missing), "--data", s(&data), "--threshold", "0.5"]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.stderr.contains("nope.bsck"), "{}", r.stderr);

    let r = bifseg(&["eval", "--ckpt", s(&missing), "--data", s(&data), "--threshold", "1.5"]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("--threshold"), "{}", r.stderr);

    let r = bifseg(&["synth", "--count", "0", "--size", "16", "--out", s(tmp.path())]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("--count"), "{}", r.stderr);

    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "epochs = 2\nwidth = 9\n").unwrap();
    let r = bifseg(&["train", "--data", s(&data), "--config", s(&cfg), "--out", "x"]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("run.cfg line 2"), "{}", r.stderr);
}

fn write_folds(dir: &Path, metric: &str, values: &[f64]) -> Vec<PathBuf> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let p = dir.join(format!("fold{i}.txt"));
            fs::write(&p, format!("{metric}={v}\n")).unwrap();
            p
        })
        .collect()
}

#[test]
fn report_over_reference_dice_folds() {
    let tmp = TempDir::new().unwrap();
    let folds = write_folds(tmp.path(), "dice", &[0.778, 0.812, 0.669, 0.762, 0.819]);
    let mut args = vec!["report", "--fold-metrics"];
    args.extend(folds.iter().map(|p| s(p)));
    let r = bifseg(&args);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    // the printed folds are themselves rounded: their spread is 0.0538
    assert!(r.stdout.contains("dice  0.768 ± 0.054"), "{}", r.stdout);
    let mean: f64 = value(&r.stdout, "dice_mean").parse().unwrap();
    let std: f64 = value(&r.stdout, "dice_std").parse().unwrap();
    assert!((mean - 0.768).abs() < 1e-3 && (std - 0.053).abs() < 1e-3);

    fs::write(&folds[2], "dice=0.5\niou=0.5\n").unwrap();
    let r = bifseg(&args);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.stderr.contains("fold0.txt: missing iou"), "{}", r.stderr);
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        levels: 2,
        base_channels: 4,
        fcn_channels: 4,
        input_size: (16, 16),
        ..ModelConfig::default()
    }
}

/// A model whose final map is `image > 0.5`: the lung gate is open
/// everywhere and the FCN head passes the image channel straight through.
fn threshold_model() -> BifurcatedModel {
    let mut m = BifurcatedModel::new(tiny_config(), 0).unwrap();
    let mut set = |name: &str, f: &dyn Fn(usize) -> f32| {
        let i = m.params.index_of(name).unwrap();
        for (j, v) in m.params.by_index_mut(i).data_mut().iter_mut().enumerate() {
            *v = f(j);
        }
    };
    set("lung.out.weight", &|_| 0.0);
    set("lung.out.bias", &|_| 5.0);
    // [out 0][in 0][1][1] is flat index 4 in a 3x3 kernel
    set("fcn.conv1.weight", &|j| if j == 4 { 1.0 } else { 0.0 });
    set("fcn.conv2.weight", &|j| if j == 4 { 1.0 } else { 0.0 });
    set("fcn.out.weight", &|j| if j == 0 { 10.0 } else { 0.0 });
    set("fcn.out.bias", &|_| -5.0);
    m
}

fn write_model(dir: &Path, m: &BifurcatedModel) -> PathBuf {
    let ckpt = dir.join("model.bsck");
    save_checkpoint(&ckpt, &m.params).unwrap();
    fs::write(sidecar_path(&ckpt), model_config_text(&m.config)).unwrap();
    ckpt
}

/// Bright pixels (0.8) in a blob, dim (0.2) elsewhere; the infection mask is
/// the blob, optionally with `flips` pixels toggled.
fn blob_slices(count: usize, flips: usize) -> Vec<SliceSample> {
    let shape = Shape::new(1, 1, 16, 16).unwrap();
    (0..count)
        .map(|k| {
            let inside = |y: usize, x: usize| (y as i64 - 6 - k as i64).pow(2) + (x as i64 - 8).pow(2) < 12;
            let image = Tensor::from_fn(shape, |[_, _, y, x]| if inside(y, x) { 0.8 } else { 0.2 });
            let inf = Tensor::from_fn(shape, |[_, _, y, x]| {
                let flip = y * 16 + x < flips * (k + 1) && (y + x) % 3 == 0;
                if inside(y, x) != flip { 1.0 } else { 0.0 }
            });
            SliceSample::new(image, Tensor::ones(shape), inf, format!("v{k}")).unwrap()
        })
        .collect()
}

#[test]
fn eval_of_an_exact_model_is_perfect() {
    let tmp = TempDir::new().unwrap();
    let ckpt = write_model(tmp.path(), &threshold_model());
    let manifest = write_dataset(tmp.path().join("data"), &blob_slices(3, 0)).unwrap();
    let r = bifseg(&["eval", "--ckpt", s(&ckpt), "--data", s(&manifest), "--threshold", "0.5"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    for m in ["sensitivity", "specificity", "iou", "dice", "ppv"] {
        assert_eq!(value(&r.stdout, m), "1.0", "{m}");
    }
}

#[test]
fn predict_then_count_matches_eval() {
    let tmp = TempDir::new().unwrap();
    let ckpt = write_model(tmp.path(), &threshold_model());
    let slices = blob_slices(3, 6);
    let manifest = write_dataset(tmp.path().join("data"), &slices).unwrap();
    let r = bifseg(&["eval", "--ckpt", s(&ckpt), "--data", s(&manifest), "--threshold", "0.5"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let reported = MetricReport::parse_key_values(&r.stdout).unwrap();
    assert!(reported.dice < 1.0);

    let mut total = ConfusionCounts::default();
    for i in 0..slices.len() {
        let image = tmp.path().join(format!("data/slice_{i:04}.image.bsg1"));
        let out = tmp.path().join(format!("pred{i}.bsg1"));
        let r = bifseg(&["predict", "--ckpt", s(&ckpt), "--image", s(&image), "--out", s(&out)]);
        assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
        let mask = read_tensor(&out).unwrap();
        total += confusion_counts(&mask, &slices[i].infection_mask).unwrap();
    }
    assert_eq!(metrics_from_counts(&total), reported);

    let out = tmp.path().join("prob.bsg1");
    let image = tmp.path().join("data/slice_0000.image.bsg1");
    let r = bifseg(&["predict", "--ckpt", s(&ckpt), "--image", s(&image), "--out", s(&out), "--prob"]);
    assert_eq!(r.code, EXIT_OK);
    let p = read_tensor(&out).unwrap();
    assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn predict_rejects_the_wrong_size() {
    let tmp = TempDir::new().unwrap();
    let ckpt = write_model(tmp.path(), &threshold_model());
    // two levels need sides divisible by 4
    let image = tmp.path().join("odd.bsg1");
    write_bsg1(&image, &Bsg1Array::from_tensor(&Tensor::zeros(Shape::new(1, 1, 18, 16).unwrap()))).unwrap();
    let r = bifseg(&["predict", "--ckpt", s(&ckpt), "--image", s(&image), "--out", "x.bsg1"]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.stderr.contains("odd.bsg1"), "{}", r.stderr);
}

fn train_run(dir: &Path, data: &Path, cfg: &Path) -> (Outcome, PathBuf, PathBuf) {
    let ckpt = dir.join("m.bsck");
    let log = dir.join("log.tsv");
    let r = bifseg(&[
        "train", "--data", s(data), "--config", s(cfg), "--out", s(&ckpt), "--log", s(&log), "--seed", "4",
        "--max-steps", "3",
    ]);
    (r, ckpt, log)
}

#[test]
fn train_calibrate_eval_are_repeatable() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(bifseg(&["synth", "--count", "4", "--size", "16", "--seed", "2", "--out", s(&data)]).code, 0);
    let manifest = data.join("manifest.tsv");
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "levels = 2\nbase_channels = 4\nfcn_channels = 4\nbatch_size = 2\nmax_steps = 50\n").unwrap();

    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        fs::create_dir(&dir).unwrap();
        let (r, ckpt, log) = train_run(&dir, &manifest, &cfg);
        assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
        // the flag wins over the file
        assert_eq!(value(&r.stdout, "steps"), "3");
        assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 4);
        let cal = bifseg(&["calibrate", "--ckpt", s(&ckpt), "--data", s(&manifest)]);
        assert_eq!(cal.code, EXIT_OK, "{}", cal.stderr);
        let t = value(&cal.stdout, "threshold").to_owned();
        let ev = bifseg(&["eval", "--ckpt", s(&ckpt), "--data", s(&manifest), "--threshold", &t]);
        assert_eq!(ev.code, EXIT_OK, "{}", ev.stderr);
        let mut bytes = files(&dir);
        bytes.push(("train".into(), r.stdout.replace(s(&dir), "").into_bytes()));
        bytes.push(("calibrate".into(), cal.stdout.into_bytes()));
        bytes.push(("eval".into(), ev.stdout.into_bytes()));
        outputs.push(bytes);
    }
    assert_eq!(outputs[0], outputs[1]);
    let sidecar = fs::read_to_string(tmp.path().join("a/m.bsck.cfg")).unwrap();
    assert!(sidecar.contains("base_channels = 4") && sidecar.contains("input_height = 16"));
}

#[test]
fn train_rejects_a_mismatched_input_size() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(bifseg(&["synth", "--count", "2", "--size", "16", "--out", s(&data)]).code, 0);
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "levels = 2\ninput_height = 32\n").unwrap();
    let (r, _, _) = train_run(tmp.path(), &data.join("manifest.tsv"), &cfg);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("16x16"), "{}", r.stderr);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_bifseg");
    let out = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&out.stdout).contains("synth"));
    let out = Command::new(bin).args(["eval", "--wat"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let out = Command::new(bin)
        .args(["report", "--fold-metrics", "/nonexistent/fold.txt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/fold.txt"));
}
