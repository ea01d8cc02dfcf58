//! Every block pattern of a small two-layer instance: construction, loss and class.

use landscape_lab::factor::BlockPattern;
use landscape_lab::shallow::{CriticalPointSpec, ShallowInstance};
use landscape_lab::Matrix;

fn main() {
    let x = Matrix::identity(3, 3);
    let y = Matrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
    let inst = ShallowInstance::new(x, y, 2).unwrap();
    println!("global minimum value: {}", inst.global_min_value());
    for mask in 0u32..8 {
        let p: Vec<usize> = (0..3).map(|k| (mask >> k & 1) as usize).collect();
        if p.iter().sum::<usize>() > inst.budget() {
            continue;
        }
        let spec = CriticalPointSpec::canonical(&inst, &BlockPattern::new(p.clone(), 0)).unwrap();
        let pt = inst.construct_critical(&spec).unwrap();
        println!(
            "p = {p:?}  loss = {:.3}  formula = {:.3}  |grad| = {:.1e}  {}",
            pt.loss,
            inst.loss_formula(&spec.pattern()).unwrap(),
            pt.certificate.max_grad_norm,
            pt.classification
        );
    }
}
