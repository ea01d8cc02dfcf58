//! One-hidden-layer ReLU networks, `L(A1, A2) = 1/2 |A2 relu(A1 X) - Y|_F^2`, analysed one
//! activation cone at a time.
//!
//! Inside the cone `K(I, J)`, where `(A1 X)` is nonnegative exactly on the rows `I` and
//! columns `J`, the loss is the shallow linear loss of `(A1[I,:], A2[:,I])` on the samples `J`
//! plus the constant `1/2 |Y[:, J^c]|^2`. Index sets are 0-based.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{certify_critical_with_step, Certificate, Objective, ProbeSummary, Verdict};
use crate::error::{dim_err, Error, Result};
use crate::matrix::{ensure_finite, select_cols, select_rows, spectral_norm, Matrix};
use crate::shallow::{CertifiedPoint, CriticalPointSpec, ShallowInstance};
use crate::spectral::pinv;
use crate::Tolerances;

/// Largest sample count the exhaustive `d1 = 1` search accepts.
pub const SEARCH_LIMIT: usize = 20;
pub const RESTARTS: usize = 20;
/// Relative factor of the default strictness margin, `margin = 1e-9 max |A1 X|`.
pub const DEFAULT_MARGIN_FACTOR: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ReluInstance {
    x: Matrix,
    y: Matrix,
    d1: usize,
    tol: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationCone {
    pub i: Vec<usize>,
    pub j: Vec<usize>,
    /// Strictness margin for the negative entries; `None` means the default relative margin.
    #[serde(default)]
    pub margin: Option<f64>,
}

impl ActivationCone {
    pub fn new(mut i: Vec<usize>, mut j: Vec<usize>) -> Self {
        i.sort_unstable();
        i.dedup();
        j.sort_unstable();
        j.dedup();
        ActivationCone { i, j, margin: None }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = Some(margin);
        self
    }

    pub fn is_constant(&self) -> bool {
        self.i.is_empty() || self.j.is_empty()
    }

    /// `({1},{2})` style label with 1-based indices.
    pub fn label(&self) -> String {
        let f = |v: &[usize]| v.iter().map(|k| (k + 1).to_string()).collect::<Vec<_>>().join(",");
        format!("({{{}}},{{{}}})", f(&self.i), f(&self.j))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConeMembership {
    pub inside: bool,
    /// Smallest active entry, or `+inf` when there is none.
    pub active_min: f64,
    /// Largest inactive entry, or `-inf` when there is none.
    pub inactive_max: f64,
    pub margin: f64,
    /// `min(active_min, -inactive_max - margin)`; positive means strictly inside.
    pub slack: f64,
}

#[derive(Debug, Clone)]
pub enum ReducedProblem {
    Linear { inst: ShallowInstance, offset: f64 },
    Constant { value: f64 },
}

/// Rows of `A1` outside `I` and columns of `A2` outside `I`; defaults are derived.
#[derive(Debug, Clone, Default)]
pub struct FreeParams {
    pub a1_rows: Option<Matrix>,
    pub a2_cols: Option<Matrix>,
}

#[derive(Debug, Clone)]
pub struct ReluCertifiedPoint {
    pub cone: ActivationCone,
    pub a1: Matrix,
    pub a2: Matrix,
    pub loss: f64,
    pub offset: f64,
    pub membership: ConeMembership,
    pub certificate: Certificate,
    /// Certified point of the reduced linear problem; absent in the constant cone.
    pub reduced: Option<CertifiedPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeFinding {
    pub j: Vec<usize>,
    pub group: Option<usize>,
    pub sigma: f64,
    pub c: f64,
    pub loss: f64,
    /// `1/2 Tr YY^T - 1/2 sigma`.
    pub predicted_loss: f64,
    #[serde(skip)]
    pub a1: Matrix,
    #[serde(skip)]
    pub a2: Matrix,
    pub slack: f64,
    pub grad_norm: f64,
    pub constant: bool,
}

fn relu(m: &Matrix) -> Matrix {
    m.map(|v| v.max(0.0))
}

impl ReluInstance {
    pub fn new(x: Matrix, y: Matrix, d1: usize) -> Result<Self> {
        Self::with_tolerances(x, y, d1, Tolerances::default())
    }

    pub fn with_tolerances(x: Matrix, y: Matrix, d1: usize, tol: Tolerances) -> Result<Self> {
        ensure_finite(&x, "X")?;
        ensure_finite(&y, "Y")?;
        if x.ncols() != y.ncols() {
            return Err(dim_err(format!("X has {} samples, Y has {}", x.ncols(), y.ncols())));
        }
        Ok(ReluInstance { x, y, d1, tol })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }
    pub fn y(&self) -> &Matrix {
        &self.y
    }
    pub fn d1(&self) -> usize {
        self.d1
    }
    pub fn samples(&self) -> usize {
        self.x.ncols()
    }

    pub fn check(&self, a1: &Matrix, a2: &Matrix) -> Result<()> {
        if a1.shape() != (self.d1, self.x.nrows()) || a2.shape() != (self.y.nrows(), self.d1) {
            return Err(dim_err(format!(
                "A1 must be {}x{} and A2 {}x{}, got {:?} and {:?}",
                self.d1,
                self.x.nrows(),
                self.y.nrows(),
                self.d1,
                a1.shape(),
                a2.shape()
            )));
        }
        Ok(())
    }

    fn loss_unchecked(&self, a1: &Matrix, a2: &Matrix) -> f64 {
        0.5 * (a2 * relu(&(a1 * &self.x)) - &self.y).norm_squared()
    }

    fn gradients_unchecked(&self, a1: &Matrix, a2: &Matrix) -> (Matrix, Matrix) {
        let pre = a1 * &self.x;
        let h = relu(&pre);
        let r = a2 * &h - &self.y;
        let g2 = &r * h.transpose();
        let back = (a2.transpose() * &r).zip_map(&pre, |b, p| if p > 0.0 { b } else { 0.0 });
        (back * self.x.transpose(), g2)
    }

    pub fn relu_loss(&self, a1: &Matrix, a2: &Matrix) -> Result<f64> {
        self.check(a1, a2)?;
        Ok(self.loss_unchecked(a1, a2))
    }

    /// Gradients where `A1 X` has no zero entries; zero entries count as inactive.
    pub fn relu_gradients(&self, a1: &Matrix, a2: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check(a1, a2)?;
        Ok(self.gradients_unchecked(a1, a2))
    }

    pub fn default_margin(&self, a1: &Matrix) -> f64 {
        DEFAULT_MARGIN_FACTOR * (a1 * &self.x).amax()
    }

    fn check_cone(&self, cone: &ActivationCone) -> Result<()> {
        if cone.i.iter().any(|&k| k >= self.d1) || cone.j.iter().any(|&k| k >= self.samples()) {
            return Err(Error::InvalidSpec(format!(
                "cone {} out of range for d1 = {}, m = {}",
                cone.label(),
                self.d1,
                self.samples()
            )));
        }
        if cone.margin.is_some_and(|m| !(m >= 0.0)) {
            return Err(Error::InvalidSpec("cone margin must be nonnegative".into()));
        }
        Ok(())
    }

    /// Active entries `(A1 X)[I, J] >= 0`, every other entry `< -margin`.
    pub fn cone_membership(&self, a1: &Matrix, cone: &ActivationCone) -> Result<ConeMembership> {
        self.check_cone(cone)?;
        if a1.shape() != (self.d1, self.x.nrows()) {
            return Err(dim_err(format!("A1 must be {}x{}", self.d1, self.x.nrows())));
        }
        let pre = a1 * &self.x;
        let margin = cone.margin.unwrap_or_else(|| self.default_margin(a1));
        let (mut active_min, mut inactive_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in 0..pre.nrows() {
            let row_active = cone.i.binary_search(&r).is_ok();
            for c in 0..pre.ncols() {
                let v = pre[(r, c)];
                if row_active && cone.j.binary_search(&c).is_ok() {
                    active_min = active_min.min(v);
                } else {
                    inactive_max = inactive_max.max(v);
                }
            }
        }
        let inside = active_min >= 0.0 && inactive_max < -margin;
        let slack = active_min.min(-inactive_max - margin);
        Ok(ConeMembership { inside, active_min, inactive_max, margin, slack })
    }

    /// The rectangle `I x J` of nonnegative entries of `A1 X`, if the pattern is one.
    pub fn cone_of(&self, a1: &Matrix) -> Result<ActivationCone> {
        if a1.shape() != (self.d1, self.x.nrows()) {
            return Err(dim_err(format!("A1 must be {}x{}", self.d1, self.x.nrows())));
        }
        let pre = a1 * &self.x;
        let i: Vec<usize> = (0..pre.nrows()).filter(|&r| pre.row(r).iter().any(|&v| v >= 0.0)).collect();
        let j: Vec<usize> = (0..pre.ncols()).filter(|&c| pre.column(c).iter().any(|&v| v >= 0.0)).collect();
        if i.iter().any(|&r| j.iter().any(|&c| pre[(r, c)] < 0.0)) {
            return Err(Error::NonRectangular);
        }
        Ok(ActivationCone::new(i, j))
    }

    /// Linear problem on `(X[:, J], Y[:, J])` with width `|I|` and offset `1/2 |Y[:, J^c]|^2`.
    pub fn reduced_instance(&self, cone: &ActivationCone) -> Result<ReducedProblem> {
        self.check_cone(cone)?;
        if cone.is_constant() {
            return Ok(ReducedProblem::Constant { value: 0.5 * self.y.norm_squared() });
        }
        let xj = select_cols(&self.x, &cone.j);
        let yj = select_cols(&self.y, &cone.j);
        let offset = 0.5 * (self.y.norm_squared() - yj.norm_squared());
        let inst = ShallowInstance::with_tolerances(xj, yj, cone.i.len(), self.tol)?;
        Ok(ReducedProblem::Linear { inst, offset })
    }

    /// A row `a` with `a X[:, cols] < 0`, by least squares toward negative targets.
    fn negative_row(&self, base: &Matrix, proj: &Matrix, cols: &[usize], rng: &mut ChaCha8Rng) -> Option<Matrix> {
        let xs = select_cols(&self.x, cols);
        let b = base * &xs;
        let g = proj * &xs;
        let g_pinv = pinv(&g);
        let scale = 1.0 + b.amax();
        for attempt in 0..RESTARTS {
            let t = if attempt == 0 {
                Matrix::from_element(1, cols.len(), -scale)
            } else {
                Matrix::from_fn(1, cols.len(), |_, _| -scale * rng.random_range(0.5..2.0))
            };
            let l = (&t - &b) * &g_pinv;
            let a = base + &l * proj;
            let vals = &a * &xs;
            let margin = DEFAULT_MARGIN_FACTOR * (&a * &self.x).amax();
            if vals.iter().all(|&v| v < -margin) {
                return Some(a);
            }
        }
        None
    }

    fn fd_step(&self, slack: f64) -> f64 {
        self.tol.fd_step.min(0.1 * slack / (1.0 + spectral_norm(&self.x)))
    }

    /// Criticality of the full ReLU loss at a point strictly inside a cone.
    fn certify_interior(&self, a1: &Matrix, a2: &Matrix, membership: &ConeMembership) -> Result<Certificate> {
        if !(membership.slack > 0.0) {
            return Err(Error::PointOnBoundary { slack: membership.slack });
        }
        certify_critical_with_step(self, &[a1.clone(), a2.clone()], self.fd_step(membership.slack))
    }

    /// Builds the point from a spec over the reduced problem and certifies it in the full model.
    pub fn construct_relu_critical(
        &self,
        cone: &ActivationCone,
        spec: &CriticalPointSpec,
        free: &FreeParams,
    ) -> Result<ReluCertifiedPoint> {
        let ReducedProblem::Linear { inst, offset } = self.reduced_instance(cone)? else {
            return Err(Error::InvalidSpec("the constant cone has no linear spec; use constant_point".into()));
        };
        let side = inst.side_residual(spec)?;
        let side_tol = inst.side_tolerance(spec);
        if side > side_tol {
            return Err(Error::SideConditionViolated { residual: side, tol: side_tol });
        }
        let (r1, r2) = inst.assemble(spec)?;
        let outside: Vec<usize> = (0..self.d1).filter(|k| cone.i.binary_search(k).is_err()).collect();
        let mut a1 = Matrix::zeros(self.d1, self.x.nrows());
        let mut a2 = Matrix::zeros(self.y.nrows(), self.d1);
        for (n, &r) in cone.i.iter().enumerate() {
            a1.set_row(r, &r1.row(n));
            a2.set_column(r, &r2.column(n));
        }
        if !outside.is_empty() {
            let rows = match &free.a1_rows {
                Some(m) if m.shape() == (outside.len(), self.x.nrows()) => m.clone(),
                Some(m) => return Err(Error::InvalidSpec(format!("free A1 rows must be {}x{}, got {:?}", outside.len(), self.x.nrows(), m.shape()))),
                None => {
                    let all: Vec<usize> = (0..self.samples()).collect();
                    let base = Matrix::zeros(1, self.x.nrows());
                    let proj = Matrix::identity(self.x.nrows(), self.x.nrows());
                    let mut rng = ChaCha8Rng::seed_from_u64(0);
                    let row = self
                        .negative_row(&base, &proj, &all, &mut rng)
                        .ok_or(Error::ConeViolation { slack: 0.0 })?;
                    Matrix::from_fn(outside.len(), self.x.nrows(), |_, c| row[(0, c)])
                }
            };
            let cols = match &free.a2_cols {
                Some(m) if m.shape() == (self.y.nrows(), outside.len()) => m.clone(),
                Some(m) => return Err(Error::InvalidSpec(format!("free A2 columns must be {}x{}, got {:?}", self.y.nrows(), outside.len(), m.shape()))),
                None => Matrix::zeros(self.y.nrows(), outside.len()),
            };
            for (n, &r) in outside.iter().enumerate() {
                a1.set_row(r, &rows.row(n));
                a2.set_column(r, &cols.column(n));
            }
        }
        let membership = self.cone_membership(&a1, cone)?;
        if !membership.inside {
            return Err(Error::ConeViolation { slack: membership.slack });
        }
        let certificate = self.certify_interior(&a1, &a2, &membership)?;
        let mut reduced = inst.certify_point(&r1, &r2)?;
        reduced.side_residual = Some(side);
        Ok(ReluCertifiedPoint {
            cone: cone.clone(),
            loss: self.loss_unchecked(&a1, &a2),
            a1,
            a2,
            offset,
            membership,
            certificate,
            reduced: Some(reduced),
        })
    }

    /// Locates the cone of an arbitrary interior point and certifies it there.
    pub fn certify_point(&self, a1: &Matrix, a2: &Matrix) -> Result<ReluCertifiedPoint> {
        self.check(a1, a2)?;
        let cone = self.cone_of(a1)?;
        let membership = self.cone_membership(a1, &cone)?;
        let certificate = self.certify_interior(a1, a2, &membership)?;
        let (reduced, offset) = match self.reduced_instance(&cone)? {
            ReducedProblem::Linear { inst, offset } => {
                let r1 = select_rows(a1, &cone.i);
                let r2 = select_cols(a2, &cone.i);
                (Some(inst.certify_point(&r1, &r2)?), offset)
            }
            ReducedProblem::Constant { value } => (None, value),
        };
        Ok(ReluCertifiedPoint {
            cone,
            loss: self.loss_unchecked(a1, a2),
            a1: a1.clone(),
            a2: a2.clone(),
            offset,
            membership,
            certificate,
            reduced,
        })
    }

    /// A point of the constant cone: every entry of `A1 X` negative and `A2 = 0`.
    pub fn constant_point(&self) -> Option<(Matrix, Matrix)> {
        let all: Vec<usize> = (0..self.samples()).collect();
        let base = Matrix::zeros(1, self.x.nrows());
        let proj = Matrix::identity(self.x.nrows(), self.x.nrows());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let row = self.negative_row(&base, &proj, &all, &mut rng)?;
        let a1 = Matrix::from_fn(self.d1, self.x.nrows(), |_, c| row[(0, c)]);
        Some((a1, Matrix::zeros(self.y.nrows(), self.d1)))
    }

    /// Every cone `({1}, J)` and positive eigen-group of `Σ_J` holding a critical point with
    /// strictly positive active entries, in lexicographic order of `J` then group, followed by
    /// the constant cone.
    pub fn exist_search_d1_1(&self, seed: u64) -> Result<Vec<ConeFinding>> {
        if self.d1 != 1 {
            return Err(Error::InvalidSpec(format!("the exhaustive search needs d1 = 1, got {}", self.d1)));
        }
        let m = self.samples();
        if m > SEARCH_LIMIT {
            return Err(Error::SearchBudgetExceeded { m, limit: SEARCH_LIMIT });
        }
        let mut subsets: Vec<Vec<usize>> =
            (1u32..(1u32 << m)).map(|mask| (0..m).filter(|k| mask >> k & 1 == 1).collect()).collect();
        subsets.sort();
        let per_cone: Vec<Vec<ConeFinding>> = subsets
            .par_iter()
            .enumerate()
            .map(|(n, j)| self.search_cone(j, seed, n as u64))
            .collect::<Result<_>>()?;
        let mut out: Vec<ConeFinding> = per_cone.into_iter().flatten().collect();
        if let Some((a1, a2)) = self.constant_point() {
            let m = self.cone_membership(&a1, &ActivationCone::new(vec![], vec![]))?;
            let value = 0.5 * self.y.norm_squared();
            out.push(ConeFinding {
                j: vec![],
                group: None,
                sigma: 0.0,
                c: 0.0,
                loss: self.loss_unchecked(&a1, &a2),
                predicted_loss: value,
                a1,
                a2,
                slack: m.slack,
                grad_norm: 0.0,
                constant: true,
            });
        }
        Ok(out)
    }

    fn search_cone(&self, j: &[usize], seed: u64, stream: u64) -> Result<Vec<ConeFinding>> {
        let cone = ActivationCone::new(vec![0], j.to_vec());
        let ReducedProblem::Linear { inst, .. } = self.reduced_instance(&cone)? else {
            return Ok(vec![]);
        };
        let jc: Vec<usize> = (0..self.samples()).filter(|k| j.binary_search(k).is_err()).collect();
        let sigma = inst.sigma();
        let xj_pinv = inst.x_pinv();
        let d0 = self.x.nrows();
        let proj = Matrix::identity(d0, d0) - inst.x() * xj_pinv;
        let trace = self.y.norm_squared();
        let mut found = Vec::new();
        for g in 0..sigma.positive_count() {
            let u: Matrix = sigma.group_u(g).columns(0, 1).into_owned();
            for (ci, c) in [1.0f64, -1.0].into_iter().enumerate() {
                let base = (u.transpose() * inst.y() * xj_pinv) / c;
                if !(&base * inst.x()).iter().all(|&v| v > 0.0) {
                    continue;
                }
                let a1 = if jc.is_empty() {
                    base
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream((stream << 20) | ((g as u64) << 1) | ci as u64);
                    match self.negative_row(&base, &proj, &jc, &mut rng) {
                        Some(a) => a,
                        None => continue,
                    }
                };
                let a2 = &u * c;
                let membership = self.cone_membership(&a1, &cone)?;
                if !membership.inside || membership.slack <= 0.0 {
                    continue;
                }
                let cert = self.certify_interior(&a1, &a2, &membership)?;
                let reduced = inst.certify_point(&a1, &a2)?;
                if cert.verdict != Verdict::Critical || reduced.certificate.verdict != Verdict::Critical {
                    continue;
                }
                found.push(ConeFinding {
                    j: j.to_vec(),
                    group: Some(g),
                    sigma: sigma.groups[g].sigma,
                    c,
                    loss: self.loss_unchecked(&a1, &a2),
                    predicted_loss: 0.5 * (trace - sigma.groups[g].sigma),
                    a1,
                    a2,
                    slack: membership.slack,
                    grad_norm: cert.max_grad_norm,
                    constant: false,
                });
            }
        }
        Ok(found)
    }

    /// Smallest loss change over `samples` uniform draws from a ball around `(a1, a2)`. The
    /// radius is capped so that every draw stays in the cone of the point.
    pub fn local_min_probe_in_cone(
        &self,
        a1: &Matrix,
        a2: &Matrix,
        cone: &ActivationCone,
        radius: f64,
        samples: usize,
        seed: u64,
    ) -> Result<ProbeSummary> {
        self.check(a1, a2)?;
        let membership = self.cone_membership(a1, cone)?;
        if !membership.inside || !(membership.slack > 0.0) {
            return Err(Error::PointOnBoundary { slack: membership.slack });
        }
        let cap = 0.5 * membership.slack / spectral_norm(&self.x).max(f64::MIN_POSITIVE);
        let r = radius.min(cap);
        let base = self.loss_unchecked(a1, a2);
        let n = a1.len() + a2.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut min_delta = f64::INFINITY;
        for _ in 0..samples {
            let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let u: f64 = rng.random();
            let scale = r * u.powf(1.0 / n as f64) / norm;
            let p1 = a1 + Matrix::from_column_slice(a1.nrows(), a1.ncols(), &dir[..a1.len()]) * scale;
            let p2 = a2 + Matrix::from_column_slice(a2.nrows(), a2.ncols(), &dir[a1.len()..]) * scale;
            min_delta = min_delta.min(self.loss_unchecked(&p1, &p2) - base);
        }
        Ok(ProbeSummary { radius: r, samples, min_delta })
    }
}

impl Objective for ReluInstance {
    fn loss(&self, w: &[Matrix]) -> f64 {
        self.loss_unchecked(&w[0], &w[1])
    }
    fn gradients(&self, w: &[Matrix]) -> Vec<Matrix> {
        let (g1, g2) = self.gradients_unchecked(&w[0], &w[1]);
        vec![g1, g2]
    }
    fn gradient_scale(&self, w: &[Matrix]) -> f64 {
        let out = &w[1] * relu(&(&w[0] * &self.x));
        (1.0 + self.y.norm() + out.norm()) * (1.0 + self.x.norm()) * w[0].norm().max(1.0) * w[1].norm().max(1.0)
    }
    fn tolerances(&self) -> &Tolerances {
        &self.tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::BlockPattern;

    fn example() -> ReluInstance {
        ReluInstance::new(Matrix::identity(2, 2), Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]), 1).unwrap()
    }

    fn row(v: &[f64]) -> Matrix {
        Matrix::from_row_slice(1, v.len(), v)
    }

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn losses_on_example() {
        let inst = example();
        assert_eq!(inst.relu_loss(&row(&[2.0, -1.0]), &col(&[1.0, 0.0])).unwrap(), 0.5);
        assert_eq!(inst.relu_loss(&row(&[-1.0, -3.0]), &col(&[4.0, 5.0])).unwrap(), 2.5);
        assert_eq!(inst.relu_loss(&row(&[0.3, 7.0]), &col(&[0.0, 0.0])).unwrap(), 2.5);
    }

    #[test]
    fn membership_cases() {
        let inst = example();
        let m = inst.cone_membership(&row(&[2.0, -1.0]), &ActivationCone::new(vec![0], vec![0]).with_margin(0.0)).unwrap();
        assert!(m.inside);
        assert_eq!((m.active_min, -m.inactive_max), (2.0, 1.0));
        let full = ActivationCone::new(vec![0], vec![0, 1]);
        assert!(inst.cone_membership(&row(&[0.0, 0.0]), &full).unwrap().inside);
        let part = ActivationCone::new(vec![0], vec![0]);
        assert!(!inst.cone_membership(&row(&[0.0, 0.0]), &part).unwrap().inside);
    }

    #[test]
    fn reduced_slices() {
        let inst = example();
        let ReducedProblem::Linear { inst: r, offset } = inst.reduced_instance(&ActivationCone::new(vec![0], vec![0])).unwrap()
        else {
            panic!("expected a linear reduction")
        };
        assert_eq!(offset, 0.5);
        assert_eq!(r.x(), &col(&[1.0, 0.0]));
        assert_eq!(r.y(), &col(&[2.0, 0.0]));
        assert_eq!(r.sigma().zero_count, 1);
        let all = inst.reduced_instance(&ActivationCone::new(vec![0], vec![0, 1])).unwrap();
        assert!(matches!(all, ReducedProblem::Linear { offset, .. } if offset == 0.0));
        assert!(matches!(
            inst.reduced_instance(&ActivationCone::new(vec![0], vec![])).unwrap(),
            ReducedProblem::Constant { value } if value == 2.5
        ));
    }

    fn spec_for(inst: &ReluInstance, cone: &ActivationCone, c: f64, l1: &[f64]) -> CriticalPointSpec {
        let ReducedProblem::Linear { inst: r, .. } = inst.reduced_instance(cone).unwrap() else { panic!() };
        CriticalPointSpec::canonical(&r, &BlockPattern::new(vec![1], 0))
            .unwrap()
            .with_c(Matrix::from_element(1, 1, c))
            .with_l1(row(l1))
    }

    #[test]
    fn constructs_both_example_minima() {
        let inst = example();
        let k1 = ActivationCone::new(vec![0], vec![0]);
        let p = inst.construct_relu_critical(&k1, &spec_for(&inst, &k1, 1.0, &[1.0, -1.0]), &FreeParams::default()).unwrap();
        assert_eq!(p.a1, row(&[2.0, -1.0]));
        assert_eq!(p.a2, col(&[1.0, 0.0]));
        assert!((p.loss - 0.5).abs() < 1e-12);
        assert_eq!(p.certificate.verdict, Verdict::Critical);

        let k2 = ActivationCone::new(vec![0], vec![1]);
        let q = inst.construct_relu_critical(&k2, &spec_for(&inst, &k2, 1.0, &[-1.0, 0.0]), &FreeParams::default()).unwrap();
        assert_eq!(q.a1, row(&[-1.0, 1.0]));
        assert_eq!(q.a2, col(&[0.0, 1.0]));
        assert!((q.loss - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flipped_sign_leaves_the_cone() {
        let inst = example();
        let k1 = ActivationCone::new(vec![0], vec![0]);
        let r = inst.construct_relu_critical(&k1, &spec_for(&inst, &k1, -1.0, &[1.0, -1.0]), &FreeParams::default());
        assert!(matches!(r, Err(Error::ConeViolation { .. })));
    }

    #[test]
    fn search_finds_three_levels() {
        let found = example().exist_search_d1_1(1).unwrap();
        let losses: Vec<f64> = found.iter().map(|f| f.loss).collect();
        assert_eq!(losses.len(), 3);
        for (got, want) in losses.iter().zip([0.5, 2.0, 2.5]) {
            assert!((got - want).abs() < 1e-12, "{losses:?}");
        }
        assert_eq!(found[0].j, vec![0]);
        assert_eq!(found[1].j, vec![1]);
        assert!(found[2].constant);
        for f in &found {
            assert!((f.loss - f.predicted_loss).abs() < 1e-12);
        }
    }

    #[test]
    fn search_with_zero_targets_only_constant() {
        let inst = ReluInstance::new(Matrix::identity(2, 2), Matrix::zeros(2, 2), 1).unwrap();
        let found = inst.exist_search_d1_1(0).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].loss, 0.0);
    }

    #[test]
    fn search_budget() {
        let inst = ReluInstance::new(Matrix::zeros(1, 21), Matrix::zeros(1, 21), 1).unwrap();
        assert!(matches!(inst.exist_search_d1_1(0), Err(Error::SearchBudgetExceeded { m: 21, .. })));
    }

    #[test]
    fn probes_separate_minima_from_saddles() {
        let inst = example();
        let m = inst
            .local_min_probe_in_cone(&row(&[-1.0, 1.0]), &col(&[0.0, 1.0]), &ActivationCone::new(vec![0], vec![1]), 1e-3, 2000, 5)
            .unwrap();
        assert!(m.min_delta >= 0.0, "{}", m.min_delta);

        let saddle = ReluInstance::new(Matrix::identity(2, 2), Matrix::from_row_slice(2, 2, &[2.0, -2.0, 0.1, 0.1]), 1).unwrap();
        let a1 = row(&[0.1, 0.1]);
        let a2 = col(&[0.0, 1.0]);
        assert!((saddle.relu_loss(&a1, &a2).unwrap() - 4.0).abs() < 1e-12);
        let s = saddle
            .local_min_probe_in_cone(&a1, &a2, &ActivationCone::new(vec![0], vec![0, 1]), 1e-3, 2000, 5)
            .unwrap();
        assert!(s.min_delta < 0.0);
    }

    #[test]
    fn cone_detection() {
        let inst = ReluInstance::new(Matrix::identity(2, 2), Matrix::zeros(2, 2), 2).unwrap();
        let rect = Matrix::from_row_slice(2, 2, &[1.0, -1.0, -2.0, -3.0]);
        assert_eq!(inst.cone_of(&rect).unwrap(), ActivationCone::new(vec![0], vec![0]));
        let diag = Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!(matches!(inst.cone_of(&diag), Err(Error::NonRectangular)));
    }

    #[test]
    fn gradients_match_differences_inside_cone() {
        let inst = ReluInstance::new(
            Matrix::from_row_slice(2, 3, &[1.0, 0.5, -0.3, 0.2, -1.0, 0.8]),
            Matrix::from_row_slice(2, 3, &[0.3, -0.7, 1.1, 2.0, 0.1, -0.4]),
            3,
        )
        .unwrap();
        let a1 = Matrix::from_row_slice(3, 2, &[0.4, -0.9, 1.2, 0.3, -0.5, 0.7]);
        let a2 = Matrix::from_row_slice(2, 3, &[0.6, -0.2, 0.9, -1.3, 0.5, 0.4]);
        let slack = (&a1 * inst.x()).iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        let fd = crate::certify::fd_gradient(|w| inst.loss_unchecked(&w[0], &w[1]), &[a1.clone(), a2.clone()], inst.fd_step(slack));
        let (g1, g2) = inst.relu_gradients(&a1, &a2).unwrap();
        assert!((&g1 - &fd[0]).norm() <= 1e-6 * (1.0 + g1.norm()));
        assert!((&g2 - &fd[1]).norm() <= 1e-6 * (1.0 + g2.norm()));
    }
}
