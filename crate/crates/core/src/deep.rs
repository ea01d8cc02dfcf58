//! Deep linear networks, `L(A_1..A_l) = 1/2 |A_l ... A_1 X - Y|_F^2`.
//!
//! Level `k` (0-based) pairs the product `A_(l,k+2) = A_l ... A_(k+2)` with the layer
//! `A_(k+1)` acting on the features `A_(k,1) X`, and reuses the shallow analysis there with
//! `Σ_k = Y (A_(k,1) X)^+ A_(k,1) X Y^T`.

use serde::Serialize;

use crate::certify::{certify_critical, Objective, Verdict};
use crate::chain;
use crate::classification::{classify_factor, global_min_case, Classification};
use crate::error::{dim_err, Error, Result};
use crate::factor::{decompose_factor, BlockPattern, FactorDecomposition, VBlocks};
use crate::matrix::{ensure_finite, Matrix};
use crate::shallow::{non_optimal_drop, target_gram, wrong_class, CertifiedPoint, ShallowInstance};
use crate::spectral::{grouped_eig_psd, numerical_rank, pinv, proj_col, singular_values, GroupedSvd};
use crate::witness::{self, Level, Witness, WitnessKind};
use crate::Tolerances;

#[derive(Debug, Clone)]
pub struct DeepInstance {
    x: Matrix,
    y: Matrix,
    dims: Vec<usize>,
    tol: Tolerances,
    sigma0: GroupedSvd,
}

/// Free parameters at one level. Missing blocks are derived from the previous level so the
/// captured column space carries through unchanged; missing `C` is the identity, missing `L` zero.
#[derive(Debug, Clone, Default)]
pub struct LevelSpec {
    pub blocks: Option<VBlocks>,
    pub c: Option<Matrix>,
    pub l: Option<Matrix>,
}

#[derive(Debug, Clone)]
pub struct DeepSpec {
    pub levels: Vec<LevelSpec>,
}

impl DeepSpec {
    /// Canonical level-0 blocks for `pattern`, identity `C`, zero `L`, derived deeper levels.
    pub fn canonical(inst: &DeepInstance, pattern: &BlockPattern) -> Result<Self> {
        let mut levels = vec![LevelSpec::default(); inst.depth() - 1];
        levels[0].blocks = Some(VBlocks::canonical(pattern, inst.sigma0())?);
        Ok(DeepSpec { levels })
    }
}

#[derive(Debug, Clone)]
pub struct DeepCertifiedPoint {
    pub point: CertifiedPoint,
    /// `|U_k V_k C_k - A_l ... A_(k+2)|_F` per level.
    pub consistency: Vec<f64>,
    /// `|(I - P_col(A_(l,k+1))) Y X^T A_(l-1,1)^T|_F` for k = 2..l-1.
    pub projector: Vec<f64>,
    pub level_patterns: Vec<BlockPattern>,
    pub conditions_hold: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub pattern: Option<BlockPattern>,
    pub off_block: f64,
}

impl DeepInstance {
    pub fn new(x: Matrix, y: Matrix, dims: Vec<usize>) -> Result<Self> {
        Self::with_tolerances(x, y, dims, Tolerances::default())
    }

    pub fn with_tolerances(x: Matrix, y: Matrix, dims: Vec<usize>, tol: Tolerances) -> Result<Self> {
        ensure_finite(&x, "X")?;
        ensure_finite(&y, "Y")?;
        if dims.len() < 3 {
            return Err(dim_err(format!("need at least two layers, got dims {dims:?}")));
        }
        if dims[0] != x.nrows() || dims[dims.len() - 1] != y.nrows() || x.ncols() != y.ncols() {
            return Err(dim_err(format!(
                "dims {dims:?} do not match X {:?} and Y {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let xp = pinv(&x);
        let sigma0 = grouped_eig_psd(&target_gram(&x, &y, &xp), tol.group_tol)?;
        Ok(DeepInstance { x, y, dims, tol, sigma0 })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }
    pub fn y(&self) -> &Matrix {
        &self.y
    }
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    /// Number of weight layers `l`.
    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }
    pub fn sigma0(&self) -> &GroupedSvd {
        &self.sigma0
    }
    /// Narrowest width among `d_1..d_l`.
    pub fn budget(&self) -> usize {
        *self.dims[1..].iter().min().expect("at least two layers")
    }

    pub fn check(&self, ws: &[Matrix]) -> Result<()> {
        if ws.len() != self.depth() {
            return Err(dim_err(format!("expected {} layers, got {}", self.depth(), ws.len())));
        }
        for (k, a) in ws.iter().enumerate() {
            if a.shape() != (self.dims[k + 1], self.dims[k]) {
                return Err(dim_err(format!(
                    "A_{} must be {}x{}, got {:?}",
                    k + 1,
                    self.dims[k + 1],
                    self.dims[k],
                    a.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn loss(&self, ws: &[Matrix]) -> Result<f64> {
        self.check(ws)?;
        Ok(chain::loss(ws, &self.x, &self.y))
    }

    pub fn gradients(&self, ws: &[Matrix]) -> Result<Vec<Matrix>> {
        self.check(ws)?;
        Ok(chain::gradients(ws, &self.x, &self.y))
    }

    /// Features entering layer `k + 1`: `A_(k,1) X`.
    fn features(&self, ws: &[Matrix], k: usize) -> Matrix {
        chain::output(&ws[..k], &self.x)
    }

    fn sigma_of(&self, z: &Matrix) -> Result<GroupedSvd> {
        grouped_eig_psd(&target_gram(z, &self.y, &pinv(z)), self.tol.group_tol)
    }

    /// `Σ_k = Y (A_(k,1) X)^+ A_(k,1) X Y^T`.
    pub fn sigma_k(&self, ws: &[Matrix], k: usize) -> Result<GroupedSvd> {
        self.check(ws)?;
        if k + 1 >= self.depth() {
            return Err(dim_err(format!("level {k} out of range for depth {}", self.depth())));
        }
        self.sigma_of(&self.features(ws, k))
    }

    /// `1/2 (Tr YY^T - sum_i p_i sigma_i)` over the level-0 spectrum.
    pub fn loss_formula(&self, pattern: &BlockPattern) -> Result<f64> {
        pattern.validate(&self.sigma0)?;
        Ok(0.5 * (self.y.norm_squared() - pattern.captured(&self.sigma0)))
    }

    pub fn global_min_value(&self) -> f64 {
        0.5 * (self.y.norm_squared() - self.sigma0.top_sum(self.budget().min(self.sigma0.positive_count())))
    }

    /// Builds `A_1..A_l` level by level and certifies the result.
    pub fn construct(&self, spec: &DeepSpec) -> Result<DeepCertifiedPoint> {
        let l = self.depth();
        if spec.levels.len() != l - 1 {
            return Err(Error::InvalidSpec(format!("{} level specs for depth {l}", spec.levels.len())));
        }
        let d_out = self.dims[l];
        let mut ws: Vec<Matrix> = Vec::with_capacity(l);
        let mut forms: Vec<Matrix> = Vec::with_capacity(l - 1);
        let mut captured: Option<Matrix> = None;
        for (k, ls) in spec.levels.iter().enumerate() {
            let z = self.features(&ws, k);
            let zp = pinv(&z);
            let sigma = self.sigma_of(&z)?;
            let blocks = match (&ls.blocks, &captured) {
                (Some(b), _) => b.clone(),
                (None, Some(w)) => {
                    let dec = decompose_factor(w, &sigma, self.tol.block_tol)?;
                    if !dec.consistent {
                        return Err(Error::InvalidSpec(format!(
                            "level {k}: carried column space is not invariant under Σ_{k} (off-block {:.3e})",
                            dec.off_block
                        )));
                    }
                    dec.blocks
                }
                (None, None) => return Err(Error::InvalidSpec("level 0 needs explicit blocks".into())),
            };
            blocks.validate(&sigma)?;
            let width = self.dims[k + 1];
            let v = blocks.assemble(width).map_err(|e| Error::InvalidSpec(format!("level {k}: {e}")))?;
            let c = ls.c.clone().unwrap_or_else(|| Matrix::identity(width, width));
            let lk = ls.l.clone().unwrap_or_else(|| Matrix::zeros(width, self.dims[k]));
            if c.shape() != (width, width) || lk.shape() != (width, self.dims[k]) {
                return Err(Error::InvalidSpec(format!(
                    "level {k}: C must be {width}x{width} and L {width}x{}",
                    self.dims[k]
                )));
            }
            let sv = singular_values(&c);
            if sv[sv.len() - 1] <= 1e-12 * sv[0] {
                return Err(Error::InvalidSpec(format!("level {k}: C is singular")));
            }
            let c_inv = c.clone().try_inverse().ok_or_else(|| Error::InvalidSpec(format!("level {k}: C is singular")))?;
            let a = &c_inv * v.transpose() * sigma.u.transpose() * &self.y * &zp + &lk
                - &c_inv * v.transpose() * &v * &c * &lk * (&z * &zp);
            forms.push(&sigma.u * &v * &c);
            captured = Some(&sigma.u * blocks.diag());
            ws.push(a);
        }
        ws.push(forms[l - 2].clone());
        debug_assert_eq!(ws[l - 1].nrows(), d_out);

        let consistency: Vec<f64> =
            (0..l - 1).map(|k| (&forms[k] - chain::product(&ws, l, k + 2, d_out)).norm()).collect();
        let mut dp = self.certify_point(&ws)?;
        let cons_ok = consistency
            .iter()
            .zip(&forms)
            .all(|(r, f)| *r <= self.tol.crit_tol * (1.0 + f.norm()));
        dp.conditions_hold = dp.conditions_hold && cons_ok;
        dp.consistency = consistency;
        if !dp.conditions_hold {
            dp.point.classification = Classification::NotCritical;
        }
        Ok(dp)
    }

    fn projector_residuals(&self, ws: &[Matrix]) -> (Vec<f64>, bool) {
        let l = self.depth();
        let d_out = self.dims[l];
        let lower = chain::product(ws, l - 1, 1, self.dims[0]);
        let yx = &self.y * self.x.transpose() * lower.transpose();
        let tol = self.tol.side_tol * (1.0 + self.y.norm() * self.x.norm() * lower.norm());
        let mut ok = true;
        let res = (2..l)
            .map(|k| {
                let top = chain::product(ws, l, k + 1, d_out);
                let r = (&yx - proj_col(&top) * &yx).norm();
                ok &= r <= tol;
                r
            })
            .collect();
        (res, ok)
    }

    fn level_decomposition(&self, ws: &[Matrix], k: usize) -> Result<(GroupedSvd, FactorDecomposition)> {
        let l = self.depth();
        let sigma = self.sigma_of(&self.features(ws, k))?;
        let top = chain::product(ws, l, k + 2, self.dims[l]);
        let dec = decompose_factor(&top, &sigma, self.tol.block_tol)?;
        Ok((sigma, dec))
    }

    /// Certificate, residuals and classification of an arbitrary point.
    pub fn certify_point(&self, ws: &[Matrix]) -> Result<DeepCertifiedPoint> {
        self.check(ws)?;
        let l = self.depth();
        let certificate = certify_critical(self, ws)?;
        let loss = chain::loss(ws, &self.x, &self.y);
        let (projector, proj_ok) = self.projector_residuals(ws);
        let mut point = CertifiedPoint {
            weights: ws.to_vec(),
            loss,
            classification: Classification::NotCritical,
            pattern: None,
            block_residual: None,
            side_residual: None,
            certificate,
        };
        let critical = point.certificate.verdict == Verdict::Critical;
        let mut level_patterns = Vec::new();
        if critical {
            let levels: Vec<(GroupedSvd, FactorDecomposition)> =
                (0..l - 1).map(|k| self.level_decomposition(ws, k)).collect::<Result<_>>()?;
            level_patterns = levels.iter().map(|(_, d)| d.pattern.clone()).collect();
            let (s0, d0) = &levels[0];
            point.pattern = d0.consistent.then(|| d0.pattern.clone());
            point.block_residual = Some(d0.off_block);
            point.classification = self.classify_levels(ws, &levels, s0, d0);
        }
        Ok(DeepCertifiedPoint {
            point,
            consistency: vec![],
            projector,
            level_patterns,
            conditions_hold: proj_ok && critical,
        })
    }

    fn classify_levels(
        &self,
        ws: &[Matrix],
        levels: &[(GroupedSvd, FactorDecomposition)],
        s0: &GroupedSvd,
        d0: &FactorDecomposition,
    ) -> Classification {
        let l = self.depth();
        if let Some(c) = global_min_case(d0, s0, self.budget()) {
            return c;
        }
        for (k, (s, d)) in levels.iter().enumerate() {
            if d.consistent {
                if let Some((i, j)) = d.pattern.non_optimal_pair(s) {
                    return Classification::NonOptimalOrder { level: k, i, j };
                }
            }
        }
        if !d0.consistent || !d0.pattern.captures_positive() {
            return Classification::OtherCritical;
        }
        let (s_last, d_last) = &levels[l - 2];
        let pair_budget = self.dims[l].min(self.dims[l - 1]);
        let induced = classify_factor(d_last, s_last, pair_budget);
        if numerical_rank(&ws[l - 1]) < pair_budget && d_last.consistent && d_last.pattern.is_prefix(s_last) && !induced.is_global_min() {
            return Classification::OptimalOrder;
        }
        Classification::OtherCritical
    }

    pub fn classify(&self, ws: &[Matrix]) -> Result<Classification> {
        Ok(self.certify_point(ws)?.point.classification)
    }

    /// Shallow problem seen by the last two layers: features `A_(l-2,1) X`, width `d_(l-1)`.
    pub fn induced_shallow(&self, ws: &[Matrix]) -> Result<ShallowInstance> {
        self.check(ws)?;
        let l = self.depth();
        ShallowInstance::with_tolerances(self.features(ws, l - 2), self.y.clone(), self.dims[l - 1], self.tol)
    }

    /// Rotation at the first level showing a non-optimal order; `A_l` and `A_(k+1)` change.
    pub fn descent_witness_non_optimal(&self, ws: &[Matrix], eps: f64) -> Result<Witness> {
        let class = self.classify(ws)?;
        let Classification::NonOptimalOrder { level: k, i, j } = class else {
            return Err(wrong_class("NonOptimalOrder", class));
        };
        let l = self.depth();
        let z = self.features(ws, k);
        let sigma = self.sigma_of(&z)?;
        let top = chain::product(ws, l, k + 2, self.dims[l]);
        let level = Level { sigma: &sigma, y: &self.y, z: &z, top: &top, lower: &ws[k], block_tol: self.tol.block_tol };
        let step = witness::non_optimal(&level, i, j, eps)?;
        let mut new = ws.to_vec();
        new[k] = step.lower;
        new[l - 1] = &step.transform * &ws[l - 1];
        Ok(Witness {
            kind: WitnessKind::NonOptimalOrder { level: k, i, j, sigma_i: step.sigma_i, sigma_j: step.sigma_j },
            eps,
            attempts: 1,
            loss_before: chain::loss(ws, &self.x, &self.y),
            loss_after: chain::loss(&new, &self.x, &self.y),
            predicted_change: -non_optimal_drop(eps, step.sigma_i, step.sigma_j),
            rank_before: numerical_rank(&top),
            rank_after: numerical_rank(&chain::product(&new, l, k + 2, self.dims[l])),
            weights: new,
        })
    }

    /// The shallow optimal-order witness applied to `(A_(l-1), A_l)` on the induced problem.
    pub fn descent_witness_optimal(&self, ws: &[Matrix], eps1: f64) -> Result<Witness> {
        let class = self.classify(ws)?;
        if class != Classification::OptimalOrder {
            return Err(wrong_class("OptimalOrder", class));
        }
        let l = self.depth();
        let inst = self.induced_shallow(ws)?;
        let mut w = inst.optimal_unchecked(&ws[l - 2], &ws[l - 1], eps1, true)?;
        let mut new = ws.to_vec();
        new[l - 1] = w.weights.pop().expect("two layers");
        new[l - 2] = w.weights.pop().expect("two layers");
        w.loss_before = chain::loss(ws, &self.x, &self.y);
        w.loss_after = chain::loss(&new, &self.x, &self.y);
        w.weights = new;
        Ok(w)
    }

    pub fn ascent_witness(&self, ws: &[Matrix], delta: f64) -> Result<Witness> {
        self.check(ws)?;
        witness::ascent(ws, &self.x, &self.y, delta)
    }
}

impl Objective for DeepInstance {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shallow::CriticalPointSpec;

    fn data() -> (Matrix, Matrix) {
        (Matrix::identity(2, 2), Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]))
    }

    fn build(dims: Vec<usize>, p: &[usize]) -> (DeepInstance, DeepCertifiedPoint) {
        build_with_l(dims, p, None)
    }

    fn build_with_l(dims: Vec<usize>, p: &[usize], l0: Option<Matrix>) -> (DeepInstance, DeepCertifiedPoint) {
        let (x, y) = data();
        let inst = DeepInstance::new(x, y, dims).unwrap();
        let mut spec = DeepSpec::canonical(&inst, &BlockPattern::new(p.to_vec(), 0)).unwrap();
        spec.levels[0].l = l0;
        let pt = inst.construct(&spec).unwrap();
        (inst, pt)
    }

    fn feature_l() -> Option<Matrix> {
        Some(Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]))
    }

    #[test]
    fn three_layer_prefix_point() {
        let (_, pt) = build_with_l(vec![2, 2, 2, 2], &[1, 0], feature_l());
        assert!(pt.conditions_hold);
        assert!((pt.point.loss - 0.5).abs() < 1e-12);
        let a = &pt.point.weights;
        let prod = &a[2] * &a[1] * &a[0];
        assert!((prod - Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])).norm() < 1e-12);
        assert_eq!(pt.point.classification, Classification::OptimalOrder);
        // without the extra feature the last pair is already optimal for its inputs
        let (_, flat) = build(vec![2, 2, 2, 2], &[1, 0]);
        assert_eq!(flat.point.classification, Classification::OtherCritical);
    }

    #[test]
    fn three_layer_non_optimal_point() {
        let (inst, pt) = build(vec![2, 2, 2, 2], &[0, 1]);
        assert!((pt.point.loss - 2.0).abs() < 1e-12);
        assert_eq!(pt.point.classification, Classification::NonOptimalOrder { level: 0, i: 0, j: 1 });
        let w = inst.descent_witness_non_optimal(&pt.point.weights, 0.1).unwrap();
        assert!((w.measured_change() - w.predicted_change).abs() < 1e-12);
        assert!(w.measured_change() < 0.0);
    }

    #[test]
    fn two_layers_match_shallow() {
        let (x, y) = data();
        let sh = ShallowInstance::new(x, y, 1).unwrap();
        for p in [[1usize, 0], [0, 1], [0, 0]] {
            let (deep, dp) = build(vec![2, 1, 2], &p);
            let spec = CriticalPointSpec::canonical(&sh, &BlockPattern::new(p.to_vec(), 0)).unwrap();
            let sp = sh.construct_critical(&spec).unwrap();
            assert_eq!(dp.point.weights, sp.weights);
            assert_eq!(dp.point.loss, sp.loss);
            assert_eq!(dp.point.classification, sp.classification);
            assert_eq!(deep.global_min_value(), sh.global_min_value());
        }
    }

    #[test]
    fn inconsistent_c_is_flagged() {
        let (x, y) = data();
        let inst = DeepInstance::new(x, y, vec![2, 2, 2, 2]).unwrap();
        let mut spec = DeepSpec::canonical(&inst, &BlockPattern::new(vec![1, 0], 0)).unwrap();
        spec.levels[0].c = Some(Matrix::from_row_slice(2, 2, &[1.0, 0.7, 0.0, 1.0]));
        let pt = inst.construct(&spec).unwrap();
        assert!(!pt.conditions_hold);
        assert_eq!(pt.point.classification, Classification::NotCritical);
        assert!(pt.consistency[0] > 1e-3);
    }

    #[test]
    fn deep_ascent_and_optimal() {
        let (inst, pt) = build_with_l(vec![2, 2, 2, 2], &[1, 0], feature_l());
        let up = inst.ascent_witness(&pt.point.weights, 1e-2).unwrap();
        assert!(up.measured_change() > 0.0);
        let down = inst.descent_witness_optimal(&pt.point.weights, 1e-2).unwrap();
        assert!(down.measured_change() < 0.0);
        assert!((down.measured_change() - down.predicted_change).abs() < 1e-12);
    }

    #[test]
    fn sigma_levels_follow_features() {
        let (inst, pt) = build(vec![2, 2, 2, 2], &[1, 0]);
        let s1 = inst.sigma_k(&pt.point.weights, 1).unwrap();
        assert_eq!(s1.groups.len(), 1);
        assert!((s1.groups[0].sigma - 4.0).abs() < 1e-12);
        assert_eq!(s1.zero_count, 1);
    }
}
