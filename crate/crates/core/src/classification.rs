use serde::Serialize;

use crate::factor::FactorDecomposition;
use crate::spectral::GroupedSvd;

/// Where a critical point sits in the landscape.
///
/// Group indices `i`, `j` are zero-based positions in the descending spectrum of Σ at `level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "class")]
pub enum Classification {
    /// Width-limited: the factor has full rank and captures the leading eigenvalues in order.
    GlobalMinCase1,
    /// Width to spare: every positive eigendirection is captured.
    GlobalMinCase2,
    /// Saddle: group `i` is skipped while a later group `j` is captured.
    NonOptimalOrder { level: usize, i: usize, j: usize },
    /// Saddle: rank-deficient factor capturing a prefix of the spectrum.
    OptimalOrder,
    OtherCritical,
    NotCritical,
}

impl Classification {
    pub fn is_global_min(&self) -> bool {
        matches!(self, Classification::GlobalMinCase1 | Classification::GlobalMinCase2)
    }

    pub fn is_critical(&self) -> bool {
        !matches!(self, Classification::NotCritical)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Classification::GlobalMinCase1 => "GlobalMinCase1",
            Classification::GlobalMinCase2 => "GlobalMinCase2",
            Classification::NonOptimalOrder { .. } => "NonOptimalOrder",
            Classification::OptimalOrder => "OptimalOrder",
            Classification::OtherCritical => "OtherCritical",
            Classification::NotCritical => "NotCritical",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::NonOptimalOrder { level, i, j } => write!(f, "NonOptimalOrder(level {level}, {i}, {j})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Global minimum test for a factor of the given `budget` (the narrowest width).
pub(crate) fn global_min_case(dec: &FactorDecomposition, sigma: &GroupedSvd, budget: usize) -> Option<Classification> {
    if !dec.consistent {
        return None;
    }
    let total = sigma.positive_count();
    if budget <= total {
        (dec.rank == budget && dec.pattern.is_prefix(sigma)).then_some(Classification::GlobalMinCase1)
    } else {
        dec.pattern.all_full(sigma).then_some(Classification::GlobalMinCase2)
    }
}

/// Label for a critical point whose top factor decomposes as `dec` over `sigma`.
pub(crate) fn classify_factor(dec: &FactorDecomposition, sigma: &GroupedSvd, budget: usize) -> Classification {
    if !dec.consistent {
        return Classification::OtherCritical;
    }
    if let Some(c) = global_min_case(dec, sigma, budget) {
        return c;
    }
    if let Some((i, j)) = dec.pattern.non_optimal_pair(sigma) {
        return Classification::NonOptimalOrder { level: 0, i, j };
    }
    // Zero network output: left unlabelled.
    if !dec.pattern.captures_positive() {
        return Classification::OtherCritical;
    }
    if dec.rank < budget && dec.pattern.is_prefix(sigma) {
        return Classification::OptimalOrder;
    }
    Classification::OtherCritical
}
