//! Trains briefly, holds out a validation split, sweeps the 0.01..0.99
//! threshold grid for the best pooled Dice and compares it with 0.5.
//! Nine training phantoms generalize poorly, so a low threshold usually wins.

use bifurcated_seg::data::{split_validation, synth_phantom};
use bifurcated_seg::nn::{BifurcatedModel, ModelConfig};
use bifurcated_seg::trainer::{calibrate_from_probs, evaluate_probs, predict_final, train, TrainConfig};
use bifurcated_seg::Tensor;

fn main() {
    let data = synth_phantom(12, 32, 3).unwrap();
    let (train_set, val_set) = split_validation(&data, 0.25, 0).unwrap();
    let cfg = ModelConfig { input_size: (32, 32), ..ModelConfig::default() };
    let mut model = BifurcatedModel::new(cfg, 0).unwrap();
    let tc = TrainConfig { max_steps: Some(300), ..TrainConfig::default() };
    train(&mut model, &train_set, &tc).unwrap();

    let probs = predict_final(&model, &val_set, 0.5).unwrap();
    let gts: Vec<Tensor<f32>> = val_set.iter().map(|s| s.infection_mask.clone()).collect();
    for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
        println!("threshold {t:.2}: dice {:.4}", evaluate_probs(&probs, &gts, t).unwrap().dice);
    }
    let cal = calibrate_from_probs(&probs, &gts).unwrap();
    println!("calibrated on {} validation slices: threshold {:.2}, dice {:.4}", val_set.len(), cal.threshold, cal.dice);
}
