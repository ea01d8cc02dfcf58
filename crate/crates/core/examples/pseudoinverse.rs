//! Pseudoinverse, projectors and the grouped eigen-decomposition of `Y X^+ X Y^T`.

use landscape_lab::spectral::{grouped_eig_psd, numerical_rank, pinv, proj_col, DEFAULT_GROUP_TOL};
use landscape_lab::Matrix;

fn main() {
    let x = Matrix::from_row_slice(3, 4, &[1.0, 2.0, 0.0, 1.0, 2.0, 4.0, 0.0, 2.0, 0.0, 1.0, 1.0, 0.0]);
    let xp = pinv(&x);
    println!("rank(X) = {}", numerical_rank(&x));
    let penrose = [
        (&x * &xp * &x - &x).norm(),
        (&xp * &x * &xp - &xp).norm(),
        (&x * &xp - (&x * &xp).transpose()).norm(),
        (&xp * &x - (&xp * &x).transpose()).norm(),
    ];
    println!("Penrose residuals: {:?}", penrose.map(|r| format!("{r:.2e}")));

    let p = proj_col(&x);
    println!("|P^2 - P| = {:.2e}", (&p * &p - &p).norm());

    let y = Matrix::from_row_slice(2, 4, &[1.0, 0.0, 2.0, 1.0, 0.0, 1.0, -1.0, 0.5]);
    let s = &y * &xp * &x * y.transpose();
    let g = grouped_eig_psd(&((&s + s.transpose()) * 0.5), DEFAULT_GROUP_TOL).unwrap();
    for (k, grp) in g.groups.iter().enumerate() {
        println!("group {k}: sigma = {:.6}, multiplicity {}", grp.sigma, grp.multiplicity);
    }
    println!("zero eigenvalues: {}", g.zero_count);
}
