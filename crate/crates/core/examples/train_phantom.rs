//! Overfits the model on synthetic phantoms with the default recipe and
//! reports the three losses and the final-map metrics.
//!
//! `cargo run --release --example train_phantom -- [count] [size] [max_steps]`
//! (defaults 8, 64, 500).

use std::time::Instant;

use bifurcated_seg::data::synth_phantom;
use bifurcated_seg::nn::{BifurcatedModel, ModelConfig};
use bifurcated_seg::trainer::{evaluate, train, TrainConfig};

fn main() {
    let arg = |i: usize, default: usize| std::env::args().nth(i).map_or(default, |s| s.parse().expect("integer argument"));
    let (count, size, steps) = (arg(1, 8), arg(2, 64), arg(3, 500));
    let data = synth_phantom(count, size, 1).unwrap();
    let infected = data.iter().filter(|s| s.has_infection).count();
    println!("{count} phantoms of {size}x{size}, {infected} with infection");

    let cfg = ModelConfig { input_size: (size, size), ..ModelConfig::default() };
    let mut model = BifurcatedModel::new(cfg, 0).unwrap();
    let tc = TrainConfig { max_steps: Some(steps), ..TrainConfig::default() };
    let t0 = Instant::now();
    let log = train(&mut model, &data, &tc).unwrap();
    let every = (log.records.len() / 10).max(1);
    println!("{:>5} {:>8} {:>8} {:>8} {:>8}", "step", "l_lung", "l_aux", "l_fin", "total");
    for r in log.records.iter().step_by(every).chain(log.records.last()) {
        println!("{:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", r.step, r.l_lung, r.l_aux, r.l_fin, r.total);
    }
    println!("trained {} steps in {:.1?}", log.records.len(), t0.elapsed());
    let report = evaluate(&model, &data, 0.5, 0.5).unwrap();
    print!("{report}");
}
