//! Criticality certificates, finite-difference gradient oracle, gradient-descent probes and
//! the Eckart-Young style global minimum value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::chain;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::spectral::{grouped_eig_psd, pinv};
use crate::Tolerances;

/// A loss over a list of weight matrices with closed-form gradients.
pub trait Objective {
    fn loss(&self, w: &[Matrix]) -> f64;
    fn gradients(&self, w: &[Matrix]) -> Vec<Matrix>;
    /// Natural magnitude of the gradient at `w`; the criticality tolerance is relative to it.
    fn gradient_scale(&self, w: &[Matrix]) -> f64;
    fn tolerances(&self) -> &Tolerances;
}

/// Central differences, one entry at a time.
pub fn fd_gradient<F: Fn(&[Matrix]) -> f64>(f: F, point: &[Matrix], h: f64) -> Vec<Matrix> {
    let mut w = point.to_vec();
    let mut out = Vec::with_capacity(point.len());
    for k in 0..point.len() {
        let mut g = Matrix::zeros(point[k].nrows(), point[k].ncols());
        for idx in 0..point[k].len() {
            let orig = w[k][idx];
            w[k][idx] = orig + h;
            let fp = f(&w);
            w[k][idx] = orig - h;
            let fm = f(&w);
            w[k][idx] = orig;
            g[idx] = (fp - fm) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Critical,
    NotCritical,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub grad_norms: Vec<f64>,
    pub max_grad_norm: f64,
    pub tol_used: f64,
    pub verdict: Verdict,
    /// Largest finite-difference disagreement, relative to the gradient magnitude.
    pub fd_discrepancy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSummary>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbeSummary {
    pub radius: f64,
    pub samples: usize,
    pub min_delta: f64,
}

/// Closed-form gradients, cross-checked against central differences with step `h`.
pub fn certify_critical_with_step<O: Objective + ?Sized>(obj: &O, w: &[Matrix], h: f64) -> Result<Certificate> {
    let tol = obj.tolerances();
    let grads = obj.gradients(w);
    let fd = fd_gradient(|p| obj.loss(p), w, h);
    let loss = obj.loss(w).abs();
    let mut worst = 0.0f64;
    for (k, (g, f)) in grads.iter().zip(&fd).enumerate() {
        let diff = (g - f).norm();
        let scale = g.norm().max(f.norm());
        // Roundoff in central differences is about eps * |loss| / h per entry.
        let floor = 1e-6 * (1.0 + loss) * (g.len().max(1) as f64).sqrt();
        if diff > tol.fd_rel_tol * scale + floor {
            return Err(Error::GradientMismatch {
                layer: k + 1,
                detail: format!("|closed - fd| = {diff:.3e}, |closed| = {:.3e}, |fd| = {:.3e}", g.norm(), f.norm()),
            });
        }
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        }
    }
    let grad_norms: Vec<f64> = grads.iter().map(|g| g.norm()).collect();
    let max_grad_norm = grad_norms.iter().copied().fold(0.0, f64::max);
    let tol_used = tol.crit_tol * obj.gradient_scale(w);
    let verdict = if max_grad_norm <= tol_used { Verdict::Critical } else { Verdict::NotCritical };
    Ok(Certificate { grad_norms, max_grad_norm, tol_used, verdict, fd_discrepancy: worst, probe: None })
}

pub fn certify_critical<O: Objective + ?Sized>(obj: &O, w: &[Matrix]) -> Result<Certificate> {
    certify_critical_with_step(obj, w, obj.tolerances().fd_step)
}

/// Result of plain gradient descent from a seeded Gaussian start.
#[derive(Debug, Clone)]
pub struct GdProbe {
    pub weights: Vec<Matrix>,
    pub steps: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub loss: f64,
    pub lr: f64,
}

pub const GD_MAX_STEPS: usize = 1_000_000;
pub const GD_GRAD_TOL: f64 = 1e-9;

/// Step size heuristic `0.1 / (|X|^2 (1 + |Y X^+|))` in spectral norms.
pub fn default_lr(x: &Matrix, y: &Matrix) -> f64 {
    let xs = crate::matrix::spectral_norm(x);
    let yx = crate::matrix::spectral_norm(&(y * pinv(x)));
    0.1 / (xs * xs).max(1e-12) / (1.0 + yx)
}

/// Gradient descent on `1/2 |A_l ... A_1 X - Y|^2` with layer widths `dims = [d0, d1, ..., dl]`.
pub fn gd_probe(x: &Matrix, y: &Matrix, dims: &[usize], seed: u64, max_steps: usize, lr: Option<f64>) -> Result<GdProbe> {
    if dims.len() < 2 || dims[0] != x.nrows() || *dims.last().expect("len >= 2") != y.nrows() {
        return Err(Error::Dimension(format!("dims {dims:?} do not match X {:?} and Y {:?}", x.shape(), y.shape())));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::Dimension("X and Y have different sample counts".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws: Vec<Matrix> = dims
        .windows(2)
        .map(|d| {
            let s = 0.5 / (d[0] as f64).sqrt();
            Matrix::from_fn(d[1], d[0], |_, _| { let z: f64 = StandardNormal.sample(&mut rng); s * z })
        })
        .collect();
    let lr = lr.unwrap_or_else(|| default_lr(x, y));
    let mut steps = 0;
    let mut gnorm = f64::INFINITY;
    while steps < max_steps {
        let g = chain::gradients(&ws, x, y);
        gnorm = g.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        if gnorm <= GD_GRAD_TOL || !gnorm.is_finite() {
            break;
        }
        for (a, ga) in ws.iter_mut().zip(&g) {
            *a -= ga * lr;
        }
        steps += 1;
    }
    let loss = chain::loss(&ws, x, y);
    Ok(GdProbe { weights: ws, steps, converged: gnorm <= GD_GRAD_TOL, grad_norm: gnorm, loss, lr })
}

/// `1/2 (Tr YY^T - sum of the top min(budget, positive count) eigenvalues of Y X^+ X Y^T)`.
pub fn global_min_value(x: &Matrix, y: &Matrix, budget: usize, group_tol: f64) -> Result<f64> {
    let xp = pinv(x);
    let s = y * &xp * x * y.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let g = grouped_eig_psd(&s, group_tol)?;
    let k = budget.min(g.positive_count());
    Ok(0.5 * (y.norm_squared() - g.top_sum(k)))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quad(Tolerances);
    impl Objective for Quad {
        fn loss(&self, w: &[Matrix]) -> f64 {
            0.5 * (w[0][0] - 1.0).powi(2)
        }
        fn gradients(&self, w: &[Matrix]) -> Vec<Matrix> {
            vec![Matrix::from_element(1, 1, w[0][0] - 1.0)]
        }
        fn gradient_scale(&self, _: &[Matrix]) -> f64 {
            1.0
        }
        fn tolerances(&self) -> &Tolerances {
            &self.0
        }
    }

    #[test]
    fn fd_of_scalar_quadratic() {
        let g = fd_gradient(|w| 0.5 * (w[0][0] - 1.0).powi(2), &[Matrix::zeros(1, 1)], 1e-6);
        assert!((g[0][0] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn certificate_verdicts() {
        let q = Quad(Tolerances::default());
        let c = certify_critical(&q, &[Matrix::from_element(1, 1, 1.0)]).unwrap();
        assert_eq!(c.verdict, Verdict::Critical);
        let c = certify_critical(&q, &[Matrix::zeros(1, 1)]).unwrap();
        assert_eq!(c.verdict, Verdict::NotCritical);
    }

    #[test]
    fn wrong_closed_form_is_caught() {
        struct Bad(Tolerances);
        impl Objective for Bad {
            fn loss(&self, w: &[Matrix]) -> f64 {
                w[0][0].powi(2)
            }
            fn gradients(&self, w: &[Matrix]) -> Vec<Matrix> {
                vec![Matrix::from_element(1, 1, w[0][0])]
            }
            fn gradient_scale(&self, _: &[Matrix]) -> f64 {
                1.0
            }
            fn tolerances(&self) -> &Tolerances {
                &self.0
            }
        }
        let r = certify_critical(&Bad(Tolerances::default()), &[Matrix::from_element(1, 1, 3.0)]);
        assert!(matches!(r, Err(Error::GradientMismatch { layer: 1, .. })));
    }

    #[test]
    fn global_min_on_small_data() {
        let x = Matrix::identity(2, 2);
        let y = Matrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[2.0, 1.0]));
        assert!((global_min_value(&x, &y, 1, 1e-8).unwrap() - 0.5).abs() < 1e-12);
        assert!(global_min_value(&x, &y, 2, 1e-8).unwrap().abs() < 1e-12);
        assert_eq!(global_min_value(&x, &Matrix::zeros(2, 2), 1, 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn gd_with_zero_targets_reaches_zero_loss() {
        let x = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let p = gd_probe(&x, &Matrix::zeros(2, 3), &[2, 2, 2], 3, GD_MAX_STEPS, None).unwrap();
        assert!(p.converged);
        assert!(p.loss < 1e-12);
    }

    #[test]
    fn gd_scalar_deep_chain() {
        let x = Matrix::from_element(1, 1, 1.0);
        let y = Matrix::from_element(1, 1, 2.0);
        let p = gd_probe(&x, &y, &[1, 1, 1, 1], 11, GD_MAX_STEPS, None).unwrap();
        assert!(p.converged, "grad {}", p.grad_norm);
        assert!(p.loss < 1e-12);
    }
}
