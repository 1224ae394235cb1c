//! Checks a small hand-built graph against central differences, then runs
//! the full gradient suite the `gradcheck` command uses.

use bifurcated_seg::autodiff::{grad_check, Graph};
use bifurcated_seg::gradsuite::gradient_suite;
use bifurcated_seg::tensor::ConvSpec;
use bifurcated_seg::{Shape, Tensor};

fn main() {
    // loss = bce(sigmoid(conv(relu(conv(x)))), target), checked in f64
    let shape = Shape::new(1, 2, 6, 6).unwrap();
    let x = Tensor::from_fn(shape, |[_, c, y, x]| 0.1 + ((c * 13 + y * 7 + x * 3) % 10) as f64 / 10.0);
    let f = |g: &mut Graph<f64>, x| {
        let w1 = g.constant(Tensor::from_fn(Shape::new(3, 2, 3, 3)?, |[o, c, y, x]| {
            0.2 + ((o + c + y * 3 + x) % 5) as f64 / 10.0
        }));
        let b1 = g.constant(Tensor::full(Shape::new(3, 1, 1, 1)?, -0.4));
        let h = g.conv2d(x, w1, b1, ConvSpec::same(3, 2)?)?;
        let h = g.relu(h)?;
        let w2 = g.constant(Tensor::from_fn(Shape::new(1, 3, 1, 1)?, |[_, c, _, _]| 0.3 - 0.2 * c as f64));
        let b2 = g.constant(Tensor::full(Shape::new(1, 1, 1, 1)?, 0.1));
        let z = g.conv2d(h, w2, b2, ConvSpec::same(1, 1)?)?;
        let p = g.sigmoid(z)?;
        let t = g.constant(Tensor::from_fn(Shape::new(1, 1, 6, 6)?, |[_, _, y, x]| ((x + y) % 2) as f64));
        g.bce(p, t)
    };
    let r = grad_check(f, &x, 1e-6).unwrap();
    println!("two-layer conv stack: max relative error {:.2e} over {} inputs", r.max_rel_error, r.checked);

    let checks = gradient_suite().unwrap();
    for c in &checks {
        let verdict = if c.passed() { "ok" } else { "FAIL" };
        println!("{:<70} [{}] {:.2e} < {:e}  {verdict}", c.name, c.precision, c.report.max_rel_error, c.tolerance);
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{} checks, {failed} failed", checks.len());
}
