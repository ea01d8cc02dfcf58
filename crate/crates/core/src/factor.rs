//! Block patterns of a factor's column space relative to the eigenbasis of Σ, and the
//! `A = U V C` decomposition shared by the shallow and deep constructions.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::matrix::{block_diag, Matrix};
use crate::spectral::{column_basis, orthonormal_completion, symmetric_eig, GroupedSvd};

/// Number of captured eigenvectors per positive group, plus those taken from the zero group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockPattern {
    pub per_group: Vec<usize>,
    #[serde(default)]
    pub p_bar: usize,
}

impl BlockPattern {
    pub fn new(per_group: Vec<usize>, p_bar: usize) -> Self {
        BlockPattern { per_group, p_bar }
    }

    pub fn rank(&self) -> usize {
        self.per_group.iter().sum::<usize>() + self.p_bar
    }

    pub fn validate(&self, sigma: &GroupedSvd) -> Result<()> {
        if self.per_group.len() != sigma.groups.len() {
            return Err(Error::InvalidSpec(format!(
                "pattern lists {} groups but the spectrum has {}",
                self.per_group.len(),
                sigma.groups.len()
            )));
        }
        for (i, (&p, g)) in self.per_group.iter().zip(&sigma.groups).enumerate() {
            if p > g.multiplicity {
                return Err(Error::InvalidSpec(format!("p_{i} = {p} exceeds multiplicity {}", g.multiplicity)));
            }
        }
        if self.p_bar > sigma.zero_count {
            return Err(Error::InvalidSpec(format!(
                "p_bar = {} exceeds zero-block size {}",
                self.p_bar, sigma.zero_count
            )));
        }
        Ok(())
    }

    /// Captures the leading groups in order: full groups, then one partial group, then nothing.
    pub fn is_prefix(&self, sigma: &GroupedSvd) -> bool {
        if self.p_bar > 0 {
            return false;
        }
        match self.first_unfilled(sigma) {
            None => true,
            Some(k) => self.per_group[k + 1..].iter().all(|&p| p == 0),
        }
    }

    pub fn first_unfilled(&self, sigma: &GroupedSvd) -> Option<usize> {
        (0..self.per_group.len()).find(|&i| self.per_group[i] < sigma.groups[i].multiplicity)
    }

    pub fn all_full(&self, sigma: &GroupedSvd) -> bool {
        self.first_unfilled(sigma).is_none()
    }

    /// A skipped group `i` followed by a captured group `j > i`: smallest `i`, then largest `j`.
    pub fn non_optimal_pair(&self, sigma: &GroupedSvd) -> Option<(usize, usize)> {
        let n = self.per_group.len();
        for i in 0..n {
            if self.per_group[i] < sigma.groups[i].multiplicity {
                if let Some(j) = (i + 1..n).rev().find(|&j| self.per_group[j] > 0) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    pub fn captures_positive(&self) -> bool {
        self.per_group.iter().any(|&p| p > 0)
    }

    /// `sum_i p_i sigma_i`.
    pub fn captured(&self, sigma: &GroupedSvd) -> f64 {
        self.per_group.iter().zip(&sigma.groups).map(|(&p, g)| p as f64 * g.sigma).sum()
    }
}

/// The per-group orthonormal blocks `V_i` (m_i x p_i) and `V_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct VBlocks {
    pub blocks: Vec<Matrix>,
    pub bar: Matrix,
}

impl VBlocks {
    /// First `p_i` coordinate vectors of each group.
    pub fn canonical(pattern: &BlockPattern, sigma: &GroupedSvd) -> Result<VBlocks> {
        pattern.validate(sigma)?;
        let blocks = pattern
            .per_group
            .iter()
            .zip(&sigma.groups)
            .map(|(&p, g)| Matrix::identity(g.multiplicity, p))
            .collect();
        Ok(VBlocks { blocks, bar: Matrix::identity(sigma.zero_count, pattern.p_bar) })
    }

    pub fn pattern(&self) -> BlockPattern {
        BlockPattern::new(self.blocks.iter().map(|b| b.ncols()).collect(), self.bar.ncols())
    }

    pub fn validate(&self, sigma: &GroupedSvd) -> Result<()> {
        if self.blocks.len() != sigma.groups.len() {
            return Err(Error::InvalidSpec(format!(
                "{} V blocks for {} groups",
                self.blocks.len(),
                sigma.groups.len()
            )));
        }
        let sizes = sigma.groups.iter().map(|g| g.multiplicity).chain(std::iter::once(sigma.zero_count));
        for (k, (b, m)) in self.blocks.iter().chain(std::iter::once(&self.bar)).zip(sizes).enumerate() {
            if b.nrows() != m {
                return Err(Error::InvalidSpec(format!("block {k} has {} rows, group size is {m}", b.nrows())));
            }
            let p = b.ncols();
            let err = (b.transpose() * b - Matrix::identity(p, p)).norm();
            if err > 1e-9 {
                return Err(Error::InvalidSpec(format!("block {k} is not orthonormal (residual {err:.3e})")));
            }
        }
        Ok(())
    }

    fn all(&self) -> Vec<&Matrix> {
        self.blocks.iter().chain(std::iter::once(&self.bar)).collect()
    }

    /// `diag(V_1, ..., V_r, V_bar)`, of size d x rank.
    pub fn diag(&self) -> Matrix {
        block_diag(&self.all())
    }

    /// `[diag(V_1, ..., V_bar), 0]`, of size d x width.
    pub fn assemble(&self, width: usize) -> Result<Matrix> {
        let d = self.diag();
        if d.ncols() > width {
            return Err(Error::InvalidSpec(format!("pattern rank {} exceeds width {width}", d.ncols())));
        }
        let mut v = Matrix::zeros(d.nrows(), width);
        v.columns_mut(0, d.ncols()).copy_from(&d);
        Ok(v)
    }

    /// The orthogonal block matrix `S = diag([V_i, O_i], [V_bar, O_bar])`.
    pub fn completion(&self) -> Result<Matrix> {
        let full: Vec<Matrix> = self
            .all()
            .into_iter()
            .map(|b| {
                let o = orthonormal_completion(b)?;
                let mut s = Matrix::zeros(b.nrows(), b.nrows());
                s.columns_mut(0, b.ncols()).copy_from(b);
                s.columns_mut(b.ncols(), o.ncols()).copy_from(&o);
                Ok(s)
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&Matrix> = full.iter().collect();
        Ok(block_diag(&refs))
    }
}

/// `A = U [diag(V), 0] C` recovered from a factor whose column space is Σ-invariant.
#[derive(Debug, Clone)]
pub struct FactorDecomposition {
    pub pattern: BlockPattern,
    pub blocks: VBlocks,
    pub c: Matrix,
    pub rank: usize,
    /// Frobenius mass of `U^T P_col(A) U` outside the diagonal blocks.
    pub off_block: f64,
    /// Traces agree with the rank and the off-block mass is below the tolerance.
    pub consistent: bool,
}

pub fn decompose_factor(a: &Matrix, sigma: &GroupedSvd, block_tol: f64) -> Result<FactorDecomposition> {
    let d = sigma.dim();
    if a.nrows() != d {
        return Err(dim_err(format!("factor has {} rows, spectrum has dimension {d}", a.nrows())));
    }
    let w = column_basis(a);
    let rank = w.ncols();
    let uw = sigma.u.transpose() * &w;
    let p = &uw * uw.transpose();

    let sizes = sigma.block_sizes();
    let mut off = p.clone();
    let mut per_block = Vec::with_capacity(sizes.len());
    let mut counts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &m in &sizes {
        let pb = p.view((start, start), (m, m)).into_owned();
        off.view_mut((start, start), (m, m)).fill(0.0);
        let k = pb.trace().round().max(0.0) as usize;
        per_block.push(top_eigvecs(&pb, k.min(m))?);
        counts.push(k.min(m));
        start += m;
    }
    let off_block = off.norm();

    let npos = sigma.groups.len();
    let mut blocks: Vec<Matrix> = per_block;
    let bar = if sigma.zero_count > 0 { blocks.pop().expect("zero block present") } else { Matrix::zeros(0, 0) };
    let vb = VBlocks { blocks, bar };
    let pattern = BlockPattern::new(counts[..npos].to_vec(), if sigma.zero_count > 0 { counts[npos] } else { 0 });
    let consistent = pattern.rank() == rank && off_block <= block_tol;

    let n = a.ncols();
    let c = if consistent {
        let wv = &sigma.u * vb.diag();
        let top = wv.transpose() * a;
        let rows = column_basis(&a.transpose());
        let k = if rows.ncols() == rank {
            orthonormal_completion(&rows)?
        } else {
            // Rank decisions disagree at the cutoff; fall back to the kernel of the projected rows.
            orthonormal_completion(&column_basis(&top.transpose()))?
        };
        let mut c = Matrix::zeros(n, n);
        c.rows_mut(0, rank).copy_from(&top);
        c.rows_mut(rank, n - rank).copy_from(&k.transpose());
        c
    } else {
        Matrix::identity(n, n)
    };
    Ok(FactorDecomposition { pattern, blocks: vb, c, rank, off_block, consistent })
}

/// Orthonormal eigenvectors for the `k` largest eigenvalues of a symmetric block.
fn top_eigvecs(pb: &Matrix, k: usize) -> Result<Matrix> {
    let m = pb.nrows();
    if k == 0 || m == 0 {
        return Ok(Matrix::zeros(m, 0));
    }
    let (_, vecs) = symmetric_eig(&((pb + pb.transpose()) * 0.5));
    Ok(vecs.columns(0, k).into_owned())
}
