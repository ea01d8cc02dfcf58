//! Loss and gradients of a linear chain `A_l ... A_1 X`, shared by the shallow and deep models.

use crate::matrix::Matrix;

/// `[X, A_1 X, A_2 A_1 X, ...]`.
pub(crate) fn activations(ws: &[Matrix], x: &Matrix) -> Vec<Matrix> {
    let mut h = Vec::with_capacity(ws.len() + 1);
    h.push(x.clone());
    for a in ws {
        let next = a * h.last().expect("nonempty");
        h.push(next);
    }
    h
}

pub(crate) fn output(ws: &[Matrix], x: &Matrix) -> Matrix {
    ws.iter().fold(x.clone(), |h, a| a * h)
}

pub(crate) fn loss(ws: &[Matrix], x: &Matrix, y: &Matrix) -> f64 {
    0.5 * (output(ws, x) - y).norm_squared()
}

/// `grad A_k = A_(l,k+1)^T (A_(l,1) X - Y) (A_(k-1,1) X)^T`.
pub(crate) fn gradients(ws: &[Matrix], x: &Matrix, y: &Matrix) -> Vec<Matrix> {
    let h = activations(ws, x);
    let mut back = h.last().expect("nonempty") - y;
    let mut grads = vec![Matrix::zeros(0, 0); ws.len()];
    for k in (0..ws.len()).rev() {
        grads[k] = &back * h[k].transpose();
        back = ws[k].transpose() * back;
    }
    grads
}

/// Magnitude bound for the gradient entries, used to make the criticality tolerance relative.
pub(crate) fn gradient_scale(ws: &[Matrix], x: &Matrix, y: &Matrix) -> f64 {
    let prod: f64 = ws.iter().map(|a| a.norm().max(1.0)).product();
    (1.0 + y.norm() + output(ws, x).norm()) * (1.0 + x.norm()) * prod
}

/// `A_hi ... A_lo` with 1-based inclusive indices; the identity of size `d` when empty.
pub(crate) fn product(ws: &[Matrix], hi: usize, lo: usize, d: usize) -> Matrix {
    let mut p = Matrix::identity(d, d);
    if hi < lo {
        return p;
    }
    p = ws[lo - 1].clone();
    for a in &ws[lo..hi] {
        p = a * p;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backprop_matches_explicit_formula() {
        let x = Matrix::from_row_slice(2, 3, &[1.0, 0.5, -1.0, 0.0, 2.0, 1.0]);
        let y = Matrix::from_row_slice(2, 3, &[0.3, 1.0, 0.0, -1.0, 0.2, 0.5]);
        let ws = vec![
            Matrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.0, 1.0]),
            Matrix::from_row_slice(2, 3, &[0.5, 0.0, 1.0, 1.0, -1.0, 0.2]),
            Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 2.0]),
        ];
        let g = gradients(&ws, &x, &y);
        let r = output(&ws, &x) - &y;
        for k in 1..=3 {
            let upper = product(&ws, 3, k + 1, 2);
            let lower = product(&ws, k - 1, 1, 2) * &x;
            let expect = upper.transpose() * &r * lower.transpose();
            assert!((&g[k - 1] - expect).norm() < 1e-12);
        }
    }
}
