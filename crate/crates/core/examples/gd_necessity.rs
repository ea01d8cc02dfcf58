//! Gradient descent from random starts lands on points with the predicted block structure.

use landscape_lab::certify::{gd_probe, GD_MAX_STEPS};
use landscape_lab::shallow::ShallowInstance;
use landscape_lab::Matrix;

fn main() {
    let x = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
    let y = Matrix::from_row_slice(2, 3, &[2.0, 0.0, 1.0, 0.0, 1.0, -1.0]);
    let inst = ShallowInstance::new(x.clone(), y.clone(), 1).unwrap();
    for seed in 0..5 {
        let run = gd_probe(&x, &y, &[2, 1, 2], seed, GD_MAX_STEPS, None).unwrap();
        let pt = inst.certify_point(&run.weights[0], &run.weights[1]).unwrap();
        println!(
            "seed {seed}: {} steps, loss {:.9}, {}, block residual {:.1e}",
            run.steps,
            run.loss,
            pt.classification,
            pt.block_residual.unwrap_or(f64::NAN)
        );
    }
    println!("global minimum value: {:.9}", inst.global_min_value());
}
