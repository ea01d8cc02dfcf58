//! Pseudoinverse, projectors, grouped symmetric eigendecomposition and orthonormal completion.
//!
//! Matrices are nalgebra `DMatrix`; the SVD and symmetric eigensolver are faer's.

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_GROUP_TOL: f64 = 1e-8;
const ORTHO_TOL: f64 = 1e-9;

fn to_faer(m: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD `M = U diag(s) V^T`, singular values descending.
pub fn svd(m: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return (Matrix::zeros(r, 0), vec![], Matrix::zeros(c, 0));
    }
    let f = to_faer(m).thin_svd().expect("SVD of a finite matrix converges");
    let s: Vec<f64> = (0..r.min(c)).map(|k| f.S().column_vector()[k]).collect();
    (from_faer(f.U()), s, from_faer(f.V()))
}

pub fn singular_values(m: &Matrix) -> Vec<f64> {
    svd(m).1
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn symmetric_eig(s: &Matrix) -> (Vec<f64>, Matrix) {
    let n = s.nrows();
    if n == 0 {
        return (vec![], Matrix::zeros(0, 0));
    }
    let f = to_faer(s).self_adjoint_eigen(faer::Side::Lower).expect("symmetric eigensolver converges");
    let vals = f.S().column_vector();
    let u = f.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let v = Matrix::from_fn(n, n, |i, j| u[(i, order[j])]);
    (order.iter().map(|&k| vals[k]).collect(), v)
}

fn rank_cutoff(s_max: f64, rows: usize, cols: usize) -> f64 {
    1e-10 * s_max * rows.max(cols) as f64
}

/// Moore-Penrose pseudoinverse; singular values at or below
/// `1e-10 * s_max * max(rows, cols)` are treated as zero.
pub fn pinv(m: &Matrix) -> Matrix {
    let (r, c) = m.shape();
    let (u, s, v) = svd(m);
    let mut out = Matrix::zeros(c, r);
    if s.is_empty() {
        return out;
    }
    let cut = rank_cutoff(s[0], r, c);
    for k in 0..s.len() {
        if s[k] > cut && s[k] > 0.0 {
            out += v.column(k) * u.column(k).transpose() / s[k];
        }
    }
    out
}

pub fn numerical_rank(m: &Matrix) -> usize {
    let s = singular_values(m);
    match s.first() {
        None => 0,
        Some(&top) => {
            let cut = rank_cutoff(top, m.nrows(), m.ncols());
            s.iter().filter(|&&v| v > cut && v > 0.0).count()
        }
    }
}

/// Orthonormal basis of the column space (left singular vectors above the rank cutoff).
pub fn column_basis(m: &Matrix) -> Matrix {
    let (u, s, _) = svd(m);
    let keep = match s.first() {
        None => 0,
        Some(&top) => {
            let cut = rank_cutoff(top, m.nrows(), m.ncols());
            s.iter().filter(|&&v| v > cut && v > 0.0).count()
        }
    };
    u.columns(0, keep).into_owned()
}

/// Orthogonal projector onto col(M), i.e. `M M^+`.
pub fn proj_col(m: &Matrix) -> Matrix {
    m * pinv(m)
}

/// Orthogonal projector onto ker(M), i.e. `I - M^+ M`.
pub fn proj_ker(m: &Matrix) -> Matrix {
    Matrix::identity(m.ncols(), m.ncols()) - pinv(m) * m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenGroup {
    pub sigma: f64,
    pub multiplicity: usize,
}

/// Eigendecomposition `S = U diag(groups..., 0) U^T` with eigenvalues sorted
/// descending and near-equal values merged into groups.
#[derive(Debug, Clone)]
pub struct GroupedSvd {
    pub u: Matrix,
    pub groups: Vec<EigenGroup>,
    pub zero_count: usize,
    pub group_tol: f64,
    /// Raw eigenvalues, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
}

impl GroupedSvd {
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn positive_count(&self) -> usize {
        self.groups.iter().map(|g| g.multiplicity).sum()
    }

    /// Column offset of positive group `g` in `u`.
    pub fn offset(&self, g: usize) -> usize {
        self.groups[..g].iter().map(|g| g.multiplicity).sum()
    }

    /// Block sizes along the diagonal: positive groups, then the zero block if present.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.groups.iter().map(|g| g.multiplicity).collect();
        if self.zero_count > 0 {
            v.push(self.zero_count);
        }
        v
    }

    pub fn group_u(&self, g: usize) -> Matrix {
        let off = self.offset(g);
        self.u.columns(off, self.groups[g].multiplicity).into_owned()
    }

    pub fn zero_u(&self) -> Matrix {
        self.u.columns(self.positive_count(), self.zero_count).into_owned()
    }

    /// Group values repeated by multiplicity, followed by zeros.
    pub fn expanded(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        for g in &self.groups {
            v.extend(std::iter::repeat_n(g.sigma, g.multiplicity));
        }
        v.extend(std::iter::repeat_n(0.0, self.zero_count));
        v
    }

    pub fn lambda(&self) -> Matrix {
        Matrix::from_diagonal(&nalgebra::DVector::from_vec(self.expanded()))
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.u * self.lambda() * self.u.transpose()
    }

    /// Sum of the `k` largest eigenvalues counted with multiplicity.
    pub fn top_sum(&self, k: usize) -> f64 {
        self.expanded().iter().take(k).sum()
    }

    /// Index of the positive group containing column `col` of `u`.
    pub fn group_of_column(&self, col: usize) -> Option<usize> {
        let mut off = 0;
        for (g, grp) in self.groups.iter().enumerate() {
            if col < off + grp.multiplicity {
                return Some(g);
            }
            off += grp.multiplicity;
        }
        None
    }
}

/// Grouped eigendecomposition of a symmetric positive semidefinite matrix.
///
/// Two sorted eigenvalues `a >= b` share a group when `a - b <= tol * max(a, 1)`;
/// eigenvalues at or below `tol * max(lambda_1, 1)` form the zero group.
/// Eigenvector signs are fixed so that the largest-magnitude entry is positive.
pub fn grouped_eig_psd(s: &Matrix, group_tol: f64) -> Result<GroupedSvd> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(dim_err(format!("expected a square matrix, got {}x{}", n, s.ncols())));
    }
    if !(group_tol > 0.0) {
        return Err(Error::InvalidInput(format!("group_tol must be positive, got {group_tol}")));
    }
    if n == 0 {
        return Ok(GroupedSvd {
            u: Matrix::zeros(0, 0),
            groups: vec![],
            zero_count: 0,
            group_tol,
            eigenvalues: vec![],
        });
    }
    let norm = s.norm();
    let asym = (s - s.transpose()).norm();
    if asym > 1e-10 * norm {
        return Err(Error::InvalidInput(format!("matrix is not symmetric (|S - S^T| = {asym:.3e})")));
    }
    let sym = (s + s.transpose()) * 0.5;
    let (raw, vecs) = symmetric_eig(&sym);
    let lam_min = raw[n - 1];
    if lam_min < -1e-10 * norm {
        return Err(Error::InvalidInput(format!("matrix is not positive semidefinite (eigenvalue {lam_min:.3e})")));
    }
    let mut u = vecs;
    for k in 0..n {
        let lead = u.column(k).iamax();
        if u[(lead, k)] < 0.0 {
            u.column_mut(k).neg_mut();
        }
    }
    let vals: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();

    let zero_cut = group_tol * vals[0].max(1.0);
    let positive = vals.iter().take_while(|&&v| v > zero_cut).count();
    let mut groups: Vec<EigenGroup> = Vec::new();
    let mut sum = 0.0;
    let mut start = 0;
    for k in 0..positive {
        let close_next = k + 1 < positive && vals[k] - vals[k + 1] <= group_tol * vals[k].max(1.0);
        sum += vals[k];
        if !close_next {
            let mult = k + 1 - start;
            groups.push(EigenGroup { sigma: sum / mult as f64, multiplicity: mult });
            sum = 0.0;
            start = k + 1;
        }
    }
    Ok(GroupedSvd { u, groups, zero_count: n - positive, group_tol, eigenvalues: vals })
}

/// Columns completing an orthonormal `V` (m x p) to an orthogonal `[V, O]`.
pub fn orthonormal_completion(v: &Matrix) -> Result<Matrix> {
    let (m, p) = v.shape();
    if p > m {
        return Err(dim_err(format!("{m}x{p} cannot have orthonormal columns")));
    }
    let gram_err = (v.transpose() * v - Matrix::identity(p, p)).norm();
    if gram_err > ORTHO_TOL {
        return Err(Error::InvalidInput(format!("columns are not orthonormal (residual {gram_err:.3e})")));
    }
    let mut basis: Vec<nalgebra::DVector<f64>> = (0..p).map(|j| v.column(j).into_owned()).collect();
    let mut out = Matrix::zeros(m, m - p);
    let mut used = vec![false; m];
    for k in 0..(m - p) {
        // Greedy: the standard basis vector with the largest residual is the best conditioned.
        let mut best: Option<(usize, nalgebra::DVector<f64>, f64)> = None;
        for (e, taken) in used.iter().enumerate() {
            if *taken {
                continue;
            }
            let mut r = nalgebra::DVector::zeros(m);
            r[e] = 1.0;
            for _ in 0..2 {
                for b in &basis {
                    let d = b.dot(&r);
                    r -= b * d;
                }
            }
            let nr = r.norm();
            if best.as_ref().is_none_or(|(_, _, bn)| nr > *bn) {
                best = Some((e, r, nr));
            }
        }
        let (e, r, nr) = best.expect("a candidate remains while the basis is incomplete");
        used[e] = true;
        let q = r / nr;
        out.set_column(k, &q);
        basis.push(q);
    }
    Ok(out)
}
