//! The two-sample ReLU instance: cone search, loss levels and local probes.

use landscape_lab::relu::{ActivationCone, ReluInstance};
use landscape_lab::Matrix;

fn main() {
    let x = Matrix::identity(2, 2);
    let y = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    let inst = ReluInstance::new(x, y, 1).unwrap();
    let found = inst.exist_search_d1_1(0).unwrap();
    for f in &found {
        let cone = if f.constant { ActivationCone::new(vec![], vec![]) } else { ActivationCone::new(vec![0], f.j.clone()) };
        print!("{:>10}  loss {:.3}  A1 = {:?}", cone.label(), f.loss, f.a1.as_slice());
        if !f.constant {
            let probe = inst.local_min_probe_in_cone(&f.a1, &f.a2, &cone, 1e-3, 2000, 1).unwrap();
            print!("  min probe change {:.2e}", probe.min_delta);
        }
        println!();
    }
}
