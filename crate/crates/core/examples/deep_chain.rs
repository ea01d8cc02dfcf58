//! Three-layer linear network: level-by-level construction, classification and witnesses.

use landscape_lab::deep::{DeepInstance, DeepSpec};
use landscape_lab::factor::BlockPattern;
use landscape_lab::Matrix;

fn main() {
    let x = Matrix::identity(2, 2);
    let y = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    let inst = DeepInstance::new(x, y, vec![2, 2, 2, 2]).unwrap();
    println!("global minimum value: {}", inst.global_min_value());

    for p in [vec![1, 1], vec![1, 0], vec![0, 1]] {
        let spec = DeepSpec::canonical(&inst, &BlockPattern::new(p.clone(), 0)).unwrap();
        let pt = inst.construct(&spec).unwrap();
        println!(
            "p = {p:?}  loss {:.3}  {}  consistency {:?}  projector {:?}",
            pt.point.loss, pt.point.classification, pt.consistency, pt.projector
        );
    }

    let mut spec = DeepSpec::canonical(&inst, &BlockPattern::new(vec![1, 0], 0)).unwrap();
    spec.levels[0].l = Some(Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
    let pt = inst.construct(&spec).unwrap();
    println!("with extra features: {}", pt.point.classification);
    let w = inst.descent_witness_optimal(&pt.point.weights, 1e-2).unwrap();
    println!("  optimal-order witness: change {:.3e}", w.measured_change());

    let spec = DeepSpec::canonical(&inst, &BlockPattern::new(vec![0, 1], 0)).unwrap();
    let pt = inst.construct(&spec).unwrap();
    let w = inst.descent_witness_non_optimal(&pt.point.weights, 0.1).unwrap();
    println!("non-optimal witness: change {:.6e}, predicted {:.6e}", w.measured_change(), w.predicted_change);
}
