//! Descent and ascent witnesses at the saddles of a two-layer network.

use landscape_lab::factor::BlockPattern;
use landscape_lab::shallow::{CriticalPointSpec, ShallowInstance};
use landscape_lab::Matrix;

fn main() {
    let x = Matrix::identity(3, 3);
    let y = Matrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
    let inst = ShallowInstance::new(x, y, 2).unwrap();
    let point = |p: Vec<usize>| {
        let spec = CriticalPointSpec::canonical(&inst, &BlockPattern::new(p, 0)).unwrap();
        inst.construct_critical(&spec).unwrap()
    };

    let skip = point(vec![0, 1, 1]);
    println!("{}  loss {}", skip.classification, skip.loss);
    for eps in [0.3, 0.1, 0.03] {
        let w = inst.descent_witness_non_optimal(&skip.weights[0], &skip.weights[1], eps).unwrap();
        println!(
            "  eps {eps}: change {:.6e}, predicted {:.6e}",
            w.measured_change(),
            w.predicted_change
        );
    }

    let short = point(vec![1, 0, 0]);
    println!("{}  loss {}", short.classification, short.loss);
    for eps1 in [1e-1, 1e-2, 1e-3] {
        let w = inst.descent_witness_optimal(&short.weights[0], &short.weights[1], eps1).unwrap();
        println!("  eps1 {eps1:.0e}: change {:.6e}, rank {} -> {}", w.measured_change(), w.rank_before, w.rank_after);
    }

    let w = inst.ascent_witness(&short.weights[0], &short.weights[1], 1e-2).unwrap();
    println!("ascent: change {:.6e}, predicted {:.6e}", w.measured_change(), w.predicted_change);
}
