//! Confusion counts and the five overlap metrics on a toy mask pair, then
//! the fold aggregation applied to five reference per-fold Dice and IoU values.

use bifurcated_seg::metrics::{aggregate_folds, confusion_counts, format_aggregate, metrics_from_counts, MetricReport};
use bifurcated_seg::{Shape, Tensor};

fn main() {
    let shape = Shape::new(1, 1, 8, 8).unwrap();
    let gt = Tensor::from_fn(shape, |[_, _, y, x]| if (2..6).contains(&y) && (2..6).contains(&x) { 1.0f32 } else { 0.0 });
    let pred = Tensor::from_fn(shape, |[_, _, y, x]| if (3..7).contains(&y) && (2..6).contains(&x) { 1.0f32 } else { 0.0 });
    let c = confusion_counts(&pred, &gt).unwrap();
    println!("tp {} fp {} fn {} tn {}", c.tp, c.fp, c.fn_, c.tn);
    print!("{}", metrics_from_counts(&c).to_key_values());

    let dice = [0.778, 0.812, 0.669, 0.762, 0.819];
    let iou = [0.719, 0.746, 0.594, 0.699, 0.752];
    let folds: Vec<MetricReport> = (0..5).map(|i| MetricReport::from_values([0.0, 0.0, iou[i], dice[i], 0.0])).collect();
    let (mean, std) = aggregate_folds(&folds).unwrap();
    println!("\nfive folds (population std):");
    for line in format_aggregate(&mean, &std).lines().filter(|l| l.starts_with("iou") || l.starts_with("dice")) {
        println!("{line}");
    }
}
