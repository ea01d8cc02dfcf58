//! Explicit perturbations that certify saddles: two descent constructions for the linear
//! model and a row-rescaling ascent.

use serde::Serialize;

use crate::chain;
use crate::error::{Error, Result};
use crate::factor::decompose_factor;
use crate::matrix::Matrix;
use crate::spectral::{numerical_rank, pinv, GroupedSvd};

pub const DEFAULT_EPS: f64 = 0.1;
pub const DEFAULT_EPS1: f64 = 1e-2;
pub const DEFAULT_DELTA: f64 = 1e-2;
pub const MAX_RETRIES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum WitnessKind {
    /// Rotates the first captured direction of group `j` toward the first skipped direction of group `i`.
    NonOptimalOrder { level: usize, i: usize, j: usize, sigma_i: f64, sigma_j: f64 },
    /// Adds one column along the next uncaptured eigendirection (`column` of `U S`).
    OptimalOrder { eps2: f64, column: usize, sigma: f64 },
    /// Rescales `row` of the last layer by `alpha`.
    Ascent { row: usize, alpha: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub kind: WitnessKind,
    #[serde(skip)]
    pub weights: Vec<Matrix>,
    pub eps: f64,
    pub attempts: usize,
    pub loss_before: f64,
    pub loss_after: f64,
    /// Closed-form value of `loss_after - loss_before`.
    pub predicted_change: f64,
    pub rank_before: usize,
    pub rank_after: usize,
}

impl Witness {
    pub fn measured_change(&self) -> f64 {
        self.loss_after - self.loss_before
    }

    pub fn measured_drop(&self) -> f64 {
        self.loss_before - self.loss_after
    }
}

/// One level of a linear chain: `top * lower * z` approximates `y`.
pub(crate) struct Level<'a> {
    pub sigma: &'a GroupedSvd,
    pub y: &'a Matrix,
    pub z: &'a Matrix,
    pub top: &'a Matrix,
    pub lower: &'a Matrix,
    pub block_tol: f64,
}

pub(crate) struct NonOptimalStep {
    /// `M (U S)^T`, applied on the left of the last layer.
    pub transform: Matrix,
    pub lower: Matrix,
    pub sigma_i: f64,
    pub sigma_j: f64,
}

fn decompose(level: &Level) -> Result<(crate::factor::FactorDecomposition, Matrix)> {
    let dec = decompose_factor(level.top, level.sigma, level.block_tol)?;
    if !dec.consistent {
        return Err(Error::WitnessFailed(format!(
            "factor does not decompose over the eigenbasis (off-block {:.3e})",
            dec.off_block
        )));
    }
    let c_inv = dec
        .c
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::WitnessFailed("recovered C is singular".into()))?;
    Ok((dec, c_inv))
}

/// Regenerates `lower` from `A = C^-1 V^T M^T Y Z^+ + L - C^-1 V^T V C L Z Z^+` with `L` the
/// current `lower`; `mv` stands for the captured columns `M V` (padded to the width).
fn regenerate_lower(level: &Level, c: &Matrix, c_inv: &Matrix, v: &Matrix, mv: &Matrix) -> Matrix {
    let zp = pinv(level.z);
    let zz = level.z * &zp;
    let fit = c_inv * mv.transpose() * level.y * &zp;
    let keep = c_inv * v.transpose() * v * c * level.lower * zz;
    fit + level.lower - keep
}

pub(crate) fn non_optimal(level: &Level, i: usize, j: usize, eps: f64) -> Result<NonOptimalStep> {
    let (dec, c_inv) = decompose(level)?;
    let sigma = level.sigma;
    let p = &dec.pattern.per_group;
    if p[i] >= sigma.groups[i].multiplicity || p[j] == 0 {
        return Err(Error::WrongClass {
            expected: format!("group {i} not full and group {j} captured"),
            found: format!("pattern {p:?}"),
        });
    }
    let s = dec.blocks.completion()?;
    let us = &sigma.u * &s;
    let a = sigma.offset(j);
    let b = sigma.offset(i) + p[i];
    let mut m = us.clone();
    let rotated = (us.column(a) + us.column(b) * eps) / (1.0 + eps * eps).sqrt();
    m.set_column(a, &rotated);

    let width = level.top.ncols();
    let v = dec.blocks.assemble(width)?;
    let sv = s.transpose() * &v;
    let mv = &m * &sv;
    let lower = regenerate_lower(level, &dec.c, &c_inv, &v, &mv);
    Ok(NonOptimalStep {
        transform: &m * us.transpose(),
        lower,
        sigma_i: sigma.groups[i].sigma,
        sigma_j: sigma.groups[j].sigma,
    })
}

pub(crate) struct OptimalStep {
    pub top: Matrix,
    pub lower: Matrix,
    pub predicted_change: f64,
    pub column: usize,
    pub sigma: f64,
}

/// Rank-raising perturbation of a rank-deficient factor that captures a prefix of the spectrum.
pub(crate) fn optimal(level: &Level, eps1: f64, eps2: f64) -> Result<OptimalStep> {
    let (dec, c_inv) = decompose(level)?;
    let sigma = level.sigma;
    let r = dec.rank;
    let (d, width) = level.top.shape();
    if r >= width || r >= d {
        return Err(Error::WrongClass { expected: "rank-deficient factor".into(), found: format!("rank {r}") });
    }
    let g = dec
        .pattern
        .first_unfilled(sigma)
        .ok_or_else(|| Error::WrongClass { expected: "an uncaptured group".into(), found: "all groups full".into() })?;
    let column = sigma.offset(g) + dec.pattern.per_group[g];
    let s = dec.blocks.completion()?;
    let u_q = &sigma.u * s.column(column);
    let w = &sigma.u * dec.blocks.diag();

    let mut vt = Matrix::zeros(d, width);
    vt.columns_mut(0, r).copy_from(&w);
    vt.set_column(r, &(&u_q * eps2));
    let top = &vt * &dec.c;

    let zp = pinv(level.z);
    let cl = &dec.c * level.lower;
    let mut core = Matrix::zeros(width, level.lower.ncols());
    core.rows_mut(0, r).copy_from(&(w.transpose() * level.y * &zp));
    core.set_row(r, &((u_q.transpose() * level.y * &zp) * eps1).row(0));
    let mut fitted = Matrix::zeros(width, level.lower.ncols());
    fitted.rows_mut(0, r).copy_from(&(cl.rows(0, r) * level.z * &zp));
    let lower = &c_inv * (core + &cl - fitted);

    let extra = (cl.row(r) * level.z).norm_squared();
    let sig = sigma.groups[g].sigma;
    let predicted_change = 0.5 * eps2 * eps2 * extra + (0.5 * eps1 * eps1 * eps2 * eps2 - eps1 * eps2) * sig;
    Ok(OptimalStep { top, lower, predicted_change, column, sigma: sig })
}

/// Scales one row of the last layer so that the loss strictly increases.
pub(crate) fn ascent(ws: &[Matrix], x: &Matrix, y: &Matrix, delta: f64) -> Result<Witness> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let out = chain::output(ws, x);
    let scale = 1.0 + out.norm() + y.norm();
    let (row, norm) = (0..out.nrows())
        .map(|i| (i, out.row(i).norm()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if out.nrows() == 0 || norm <= 1e-14 * scale {
        return Err(Error::NotInX);
    }
    let a = out.row(row);
    let t = y.row(row);
    let slope = a.dot(&(a - t));
    let alpha = if slope >= 0.0 { 1.0 + delta } else { 1.0 - delta };
    let mut new = ws.to_vec();
    let last = new.last_mut().expect("nonempty chain");
    let scaled = last.row(row) * alpha;
    last.set_row(row, &scaled);
    let before = chain::loss(ws, x, y);
    let after = chain::loss(&new, x, y);
    let predicted_change = delta * slope.abs() + 0.5 * delta * delta * a.norm_squared();
    Ok(Witness {
        kind: WitnessKind::Ascent { row, alpha },
        eps: delta,
        attempts: 1,
        loss_before: before,
        loss_after: after,
        predicted_change,
        rank_before: numerical_rank(ws.last().expect("nonempty")),
        rank_after: numerical_rank(new.last().expect("nonempty")),
        weights: new,
    })
}
