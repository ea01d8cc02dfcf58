//! One-hidden-layer linear networks, `L(A1, A2) = 1/2 |A2 A1 X - Y|_F^2`.

use crate::certify::{certify_critical, Certificate, Objective, Verdict};
use crate::chain;
use crate::classification::{classify_factor, Classification};
use crate::error::{dim_err, Error, Result};
use crate::factor::{decompose_factor, BlockPattern, VBlocks};
use crate::matrix::{ensure_finite, Matrix};
use crate::spectral::{grouped_eig_psd, numerical_rank, pinv, singular_values, GroupedSvd};
use crate::witness::{self, Level, Witness, WitnessKind, MAX_RETRIES};
use crate::Tolerances;

#[derive(Debug, Clone)]
pub struct ShallowInstance {
    x: Matrix,
    y: Matrix,
    d1: usize,
    tol: Tolerances,
    x_pinv: Matrix,
    sigma: GroupedSvd,
}

/// Target-side Gram matrix `Y X^+ X Y^T`, symmetrized.
pub(crate) fn target_gram(x: &Matrix, y: &Matrix, x_pinv: &Matrix) -> Matrix {
    let s = y * x_pinv * x * y.transpose();
    (&s + s.transpose()) * 0.5
}

impl ShallowInstance {
    pub fn new(x: Matrix, y: Matrix, d1: usize) -> Result<Self> {
        Self::with_tolerances(x, y, d1, Tolerances::default())
    }

    pub fn with_tolerances(x: Matrix, y: Matrix, d1: usize, tol: Tolerances) -> Result<Self> {
        ensure_finite(&x, "X")?;
        ensure_finite(&y, "Y")?;
        if x.ncols() != y.ncols() {
            return Err(dim_err(format!("X has {} samples, Y has {}", x.ncols(), y.ncols())));
        }
        let x_pinv = pinv(&x);
        let sigma = grouped_eig_psd(&target_gram(&x, &y, &x_pinv), tol.group_tol)?;
        Ok(ShallowInstance { x, y, d1, tol, x_pinv, sigma })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }
    pub fn y(&self) -> &Matrix {
        &self.y
    }
    pub fn d0(&self) -> usize {
        self.x.nrows()
    }
    pub fn d1(&self) -> usize {
        self.d1
    }
    pub fn d2(&self) -> usize {
        self.y.nrows()
    }
    pub fn sigma(&self) -> &GroupedSvd {
        &self.sigma
    }
    pub fn x_pinv(&self) -> &Matrix {
        &self.x_pinv
    }
    /// Largest rank the product `A2 A1` can reach.
    pub fn budget(&self) -> usize {
        self.d1.min(self.d2())
    }

    pub fn check(&self, a1: &Matrix, a2: &Matrix) -> Result<()> {
        if a1.shape() != (self.d1, self.d0()) || a2.shape() != (self.d2(), self.d1) {
            return Err(dim_err(format!(
                "expected A1 {}x{} and A2 {}x{}, got {:?} and {:?}",
                self.d1,
                self.d0(),
                self.d2(),
                self.d1,
                a1.shape(),
                a2.shape()
            )));
        }
        Ok(())
    }

    pub fn loss(&self, a1: &Matrix, a2: &Matrix) -> Result<f64> {
        self.check(a1, a2)?;
        Ok(chain::loss(&[a1.clone(), a2.clone()], &self.x, &self.y))
    }

    /// `(grad A1, grad A2) = (A2^T R X^T, R X^T A1^T)` with `R = A2 A1 X - Y`.
    pub fn gradients(&self, a1: &Matrix, a2: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check(a1, a2)?;
        let mut g = chain::gradients(&[a1.clone(), a2.clone()], &self.x, &self.y);
        let g2 = g.pop().expect("two layers");
        let g1 = g.pop().expect("two layers");
        Ok((g1, g2))
    }

    /// `1/2 (Tr YY^T - sum_i p_i sigma_i)`; zero-group columns contribute nothing.
    pub fn loss_formula(&self, pattern: &BlockPattern) -> Result<f64> {
        pattern.validate(&self.sigma)?;
        Ok(0.5 * (self.y.norm_squared() - pattern.captured(&self.sigma)))
    }

    pub fn global_min_value(&self) -> f64 {
        0.5 * (self.y.norm_squared() - self.sigma.top_sum(self.budget().min(self.sigma.positive_count())))
    }

    /// `|(I - UV (UV)^T) Y X^T L1^T C^T (I - V^T V)|_F`.
    pub fn side_residual(&self, spec: &CriticalPointSpec) -> Result<f64> {
        self.validate_spec(spec)?;
        let v = spec.blocks.assemble(self.d1)?;
        let uv = &self.sigma.u * &v;
        let left = Matrix::identity(self.d2(), self.d2()) - &uv * uv.transpose();
        let right = Matrix::identity(self.d1, self.d1) - v.transpose() * &v;
        let r = left * &self.y * self.x.transpose() * spec.l1.transpose() * spec.c.transpose() * right;
        Ok(r.norm())
    }

    pub fn side_tolerance(&self, spec: &CriticalPointSpec) -> f64 {
        self.tol.side_tol * (1.0 + self.y.norm() * self.x.norm() * spec.l1.norm() * spec.c.norm())
    }

    fn validate_spec(&self, spec: &CriticalPointSpec) -> Result<()> {
        spec.blocks.validate(&self.sigma)?;
        let r = spec.blocks.pattern().rank();
        if r > self.budget() {
            return Err(Error::InvalidSpec(format!("pattern rank {r} exceeds min(d1, d2) = {}", self.budget())));
        }
        if spec.c.shape() != (self.d1, self.d1) {
            return Err(Error::InvalidSpec(format!("C must be {0}x{0}, got {1:?}", self.d1, spec.c.shape())));
        }
        if spec.l1.shape() != (self.d1, self.d0()) {
            return Err(Error::InvalidSpec(format!("L1 must be {}x{}, got {:?}", self.d1, self.d0(), spec.l1.shape())));
        }
        ensure_finite(&spec.c, "C")?;
        ensure_finite(&spec.l1, "L1")?;
        if self.d1 > 0 {
            let sv = singular_values(&spec.c);
            if sv[sv.len() - 1] <= 1e-12 * sv[0] {
                return Err(Error::InvalidSpec("C is singular".into()));
            }
        }
        Ok(())
    }

    /// `A2 = U V C`, `A1 = C^-1 V^T U^T Y X^+ + L1 - C^-1 V^T V C L1 X X^+`.
    pub fn assemble(&self, spec: &CriticalPointSpec) -> Result<(Matrix, Matrix)> {
        self.validate_spec(spec)?;
        let v = spec.blocks.assemble(self.d1)?;
        let c_inv = spec.c.clone().try_inverse().ok_or_else(|| Error::InvalidSpec("C is singular".into()))?;
        let a2 = &self.sigma.u * &v * &spec.c;
        let xx = &self.x * &self.x_pinv;
        let a1 = &c_inv * v.transpose() * self.sigma.u.transpose() * &self.y * &self.x_pinv + &spec.l1
            - &c_inv * v.transpose() * &v * &spec.c * &spec.l1 * xx;
        Ok((a1, a2))
    }

    pub fn construct_critical(&self, spec: &CriticalPointSpec) -> Result<CertifiedPoint> {
        let side = self.side_residual(spec)?;
        let tol = self.side_tolerance(spec);
        if side > tol {
            return Err(Error::SideConditionViolated { residual: side, tol });
        }
        let (a1, a2) = self.assemble(spec)?;
        let mut point = self.certify_point(&a1, &a2)?;
        point.side_residual = Some(side);
        Ok(point)
    }

    /// Certifies criticality, reads the block pattern off `A2` and classifies.
    pub fn certify_point(&self, a1: &Matrix, a2: &Matrix) -> Result<CertifiedPoint> {
        self.check(a1, a2)?;
        let weights = vec![a1.clone(), a2.clone()];
        let certificate = certify_critical(self, &weights)?;
        let loss = Objective::loss(self, &weights);
        if certificate.verdict == Verdict::NotCritical {
            return Ok(CertifiedPoint {
                weights,
                loss,
                classification: Classification::NotCritical,
                pattern: None,
                block_residual: None,
                side_residual: None,
                certificate,
            });
        }
        let dec = decompose_factor(a2, &self.sigma, self.tol.block_tol)?;
        let classification = classify_factor(&dec, &self.sigma, self.budget());
        Ok(CertifiedPoint {
            weights,
            loss,
            classification,
            pattern: dec.consistent.then_some(dec.pattern),
            block_residual: Some(dec.off_block),
            side_residual: None,
            certificate,
        })
    }

    pub fn classify(&self, a1: &Matrix, a2: &Matrix) -> Result<Classification> {
        Ok(self.certify_point(a1, a2)?.classification)
    }

    fn level<'a>(&'a self, a1: &'a Matrix, a2: &'a Matrix) -> Level<'a> {
        Level { sigma: &self.sigma, y: &self.y, z: &self.x, top: a2, lower: a1, block_tol: self.tol.block_tol }
    }

    /// Descent direction at a non-optimal-order saddle: the loss drops by
    /// `1/2 eps^2 / (1 + eps^2) (sigma_i - sigma_j)`.
    pub fn descent_witness_non_optimal(&self, a1: &Matrix, a2: &Matrix, eps: f64) -> Result<Witness> {
        let class = self.classify(a1, a2)?;
        let Classification::NonOptimalOrder { i, j, .. } = class else {
            return Err(wrong_class("NonOptimalOrder", class));
        };
        let step = witness::non_optimal(&self.level(a1, a2), i, j, eps)?;
        let new = vec![step.lower, &step.transform * a2];
        let before = chain::loss(&[a1.clone(), a2.clone()], &self.x, &self.y);
        let after = chain::loss(&new, &self.x, &self.y);
        Ok(Witness {
            kind: WitnessKind::NonOptimalOrder { level: 0, i, j, sigma_i: step.sigma_i, sigma_j: step.sigma_j },
            eps,
            attempts: 1,
            loss_before: before,
            loss_after: after,
            predicted_change: -non_optimal_drop(eps, step.sigma_i, step.sigma_j),
            rank_before: numerical_rank(a2),
            rank_after: numerical_rank(&new[1]),
            weights: new,
        })
    }

    /// Descent direction at an optimal-order saddle with `eps2 = eps1^2`; the loss change is
    /// `1/2 eps2^2 |(C L1)_(r+1) X|^2 + (1/2 eps1^2 eps2^2 - eps1 eps2) sigma`. When the change
    /// is not negative, `eps1` is divided by ten, up to six times.
    pub fn descent_witness_optimal(&self, a1: &Matrix, a2: &Matrix, eps1: f64) -> Result<Witness> {
        let class = self.classify(a1, a2)?;
        if class != Classification::OptimalOrder {
            return Err(wrong_class("OptimalOrder", class));
        }
        self.optimal_unchecked(a1, a2, eps1, true)
    }

    /// The optimal-order construction at a fixed `eps1`, without retries.
    pub fn descent_witness_optimal_fixed(&self, a1: &Matrix, a2: &Matrix, eps1: f64) -> Result<Witness> {
        let class = self.classify(a1, a2)?;
        if class != Classification::OptimalOrder {
            return Err(wrong_class("OptimalOrder", class));
        }
        self.optimal_unchecked(a1, a2, eps1, false)
    }

    pub(crate) fn optimal_unchecked(&self, a1: &Matrix, a2: &Matrix, eps1: f64, retry: bool) -> Result<Witness> {
        let before = chain::loss(&[a1.clone(), a2.clone()], &self.x, &self.y);
        let mut e1 = eps1;
        let tries = if retry { MAX_RETRIES + 1 } else { 1 };
        for attempt in 1..=tries {
            let e2 = e1 * e1;
            let step = witness::optimal(&self.level(a1, a2), e1, e2)?;
            let new = vec![step.lower, step.top];
            let after = chain::loss(&new, &self.x, &self.y);
            if after < before || !retry {
                return Ok(Witness {
                    kind: WitnessKind::OptimalOrder { eps2: e2, column: step.column, sigma: step.sigma },
                    eps: e1,
                    attempts: attempt,
                    loss_before: before,
                    loss_after: after,
                    predicted_change: step.predicted_change,
                    rank_before: numerical_rank(a2),
                    rank_after: numerical_rank(&new[1]),
                    weights: new,
                });
            }
            e1 /= 10.0;
        }
        Err(Error::WitnessFailed(format!("no decrease down to eps1 = {:.1e}", e1 * 10.0)))
    }

    /// Rescales one row of `A2`; the loss strictly increases.
    pub fn ascent_witness(&self, a1: &Matrix, a2: &Matrix, delta: f64) -> Result<Witness> {
        self.check(a1, a2)?;
        witness::ascent(&[a1.clone(), a2.clone()], &self.x, &self.y, delta)
    }
}

/// `1/2 eps^2 / (1 + eps^2) (sigma_i - sigma_j)`.
pub fn non_optimal_drop(eps: f64, sigma_i: f64, sigma_j: f64) -> f64 {
    0.5 * eps * eps / (1.0 + eps * eps) * (sigma_i - sigma_j)
}

pub(crate) fn wrong_class(expected: &str, found: Classification) -> Error {
    Error::WrongClass { expected: expected.into(), found: found.to_string() }
}

impl Objective for ShallowInstance {
    fn loss(&self, w: &[Matrix]) -> f64 {
        chain::loss(w, &self.x, &self.y)
    }
    fn gradients(&self, w: &[Matrix]) -> Vec<Matrix> {
        chain::gradients(w, &self.x, &self.y)
    }
    fn gradient_scale(&self, w: &[Matrix]) -> f64 {
        chain::gradient_scale(w, &self.x, &self.y)
    }
    fn tolerances(&self) -> &Tolerances {
        &self.tol
    }
}

/// Free parameters of a critical point: blocks `V_i`, invertible `C`, and `L1`.
#[derive(Debug, Clone)]
pub struct CriticalPointSpec {
    pub blocks: VBlocks,
    pub c: Matrix,
    pub l1: Matrix,
}

impl CriticalPointSpec {
    /// Canonical blocks with `C = I` and `L1 = 0`.
    pub fn canonical(inst: &ShallowInstance, pattern: &BlockPattern) -> Result<Self> {
        Ok(CriticalPointSpec {
            blocks: VBlocks::canonical(pattern, inst.sigma())?,
            c: Matrix::identity(inst.d1(), inst.d1()),
            l1: Matrix::zeros(inst.d1(), inst.d0()),
        })
    }

    pub fn with_c(mut self, c: Matrix) -> Self {
        self.c = c;
        self
    }

    pub fn with_l1(mut self, l1: Matrix) -> Self {
        self.l1 = l1;
        self
    }

    pub fn pattern(&self) -> BlockPattern {
        self.blocks.pattern()
    }
}

/// A point with its certificate and classification.
#[derive(Debug, Clone)]
pub struct CertifiedPoint {
    pub weights: Vec<Matrix>,
    pub loss: f64,
    pub classification: Classification,
    pub pattern: Option<BlockPattern>,
    pub block_residual: Option<f64>,
    pub side_residual: Option<f64>,
    pub certificate: Certificate,
}
