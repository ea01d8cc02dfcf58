//! Closed-form gradients against central differences for all three losses.

use landscape_lab::certify::{fd_gradient, Objective};
use landscape_lab::deep::DeepInstance;
use landscape_lab::relu::ReluInstance;
use landscape_lab::shallow::ShallowInstance;
use landscape_lab::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gauss(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn worst<O: Objective>(obj: &O, w: &[Matrix]) -> f64 {
    let g = obj.gradients(w);
    let fd = fd_gradient(|p| obj.loss(p), w, 1e-6);
    g.iter().zip(&fd).map(|(a, b)| (a - b).norm() / (1.0 + a.norm())).fold(0.0, f64::max)
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = gauss(3, 5, &mut rng);
    let y = gauss(2, 5, &mut rng);

    let sh = ShallowInstance::new(x.clone(), y.clone(), 2).unwrap();
    let w = [gauss(2, 3, &mut rng), gauss(2, 2, &mut rng)];
    println!("shallow: {:.2e}", worst(&sh, &w));

    let dp = DeepInstance::new(x.clone(), y.clone(), vec![3, 4, 2, 2]).unwrap();
    let w = [gauss(4, 3, &mut rng), gauss(2, 4, &mut rng), gauss(2, 2, &mut rng)];
    println!("deep:    {:.2e}", worst(&dp, &w));

    let re = ReluInstance::new(x, y, 3).unwrap();
    let w = [gauss(3, 3, &mut rng), gauss(2, 3, &mut rng)];
    println!("relu:    {:.2e}", worst(&re, &w));
}
