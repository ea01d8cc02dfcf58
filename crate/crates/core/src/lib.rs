//! Critical points of linear and one-hidden-layer ReLU networks under squared loss.
//!
//! The linear model `1/2 |A_l ... A_1 X - Y|_F^2` has every critical point described by a
//! block pattern over the eigenbasis of `Σ = Y X^+ X Y^T`. This crate constructs points from
//! patterns, certifies them numerically, classifies them, and produces explicit descent or
//! ascent witnesses for the saddles. For ReLU networks it works cone by cone, reducing each
//! activation cone to a linear problem, and can search for spurious local minima.
//!
//! ```
//! use landscape_lab::{relu::ReluInstance, Matrix};
//!
//! let x = Matrix::identity(2, 2);
//! let y = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
//! let inst = ReluInstance::new(x, y, 1).unwrap();
//! let found = inst.exist_search_d1_1(7).unwrap();
//! let losses: Vec<f64> = found.iter().map(|f| f.loss).collect();
//! assert_eq!(losses.len(), 3);
//! assert!((losses[0] - 0.5).abs() < 1e-12);
//! ```

pub mod certify;
mod chain;
pub mod classification;
pub mod deep;
pub mod error;
pub mod factor;
pub mod matrix;
pub mod relu;
pub mod report;
pub mod shallow;
pub mod spectral;
pub mod witness;

use serde::{Deserialize, Serialize};

pub use classification::Classification;
pub use error::{Error, Result};
pub use matrix::Matrix;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative gap under which eigenvalues share a group.
    pub group_tol: f64,
    /// Gradient norm bound, relative to the gradient scale at the point.
    pub crit_tol: f64,
    /// Bound on the side-condition residual, relative to the input norms.
    pub side_tol: f64,
    /// Largest off-block mass tolerated when reading a pattern off a factor.
    pub block_tol: f64,
    pub fd_step: f64,
    pub fd_rel_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            group_tol: spectral::DEFAULT_GROUP_TOL,
            crit_tol: 1e-8,
            side_tol: 1e-10,
            block_tol: 1e-6,
            fd_step: 1e-6,
            fd_rel_tol: 1e-4,
        }
    }
}
