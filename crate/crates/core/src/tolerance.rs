//! Numerical tolerances shared by the library, the self-test and the
//! acceptance suite.

use serde::{Deserialize, Serialize};

/// Every threshold used to validate or classify a numerical result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Max-abs deviation from Hermiticity.
    pub hermitian: f64,
    /// Unit trace of a density matrix, completeness of a POVM / channel.
    pub trace: f64,
    /// Most negative eigenvalue still treated as zero.
    pub psd: f64,
    /// Probability normalization in classical Fisher information.
    pub probability: f64,
    /// Central finite-difference step on dimensionless parameters.
    pub fd_step: f64,
    /// Analytic derivative vs finite differences.
    pub fd_agreement: f64,
    /// Relative eigenvalue floor: pairs with `p_m + p_n` below
    /// `floor * p_max` are dropped from SLD sums, outcomes with
    /// `p(x)` below `floor` from classical Fisher sums.
    pub floor: f64,
    /// Support leakage above which an SLD is declared undefined.
    pub support_leak: f64,
    /// Residual of the SLD defining equation.
    pub sld_residual: f64,
    /// Threshold for the compatibility verdicts.
    pub compatibility: f64,
    /// Relative cutoff for a Fisher matrix to count as invertible.
    pub singular: f64,
    /// Holevo / QFI bound equality.
    pub bound_equality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermitian: 1e-12,
            trace: 1e-10,
            psd: 1e-10,
            probability: 1e-9,
            fd_step: 1e-5,
            fd_agreement: 1e-6,
            floor: 1e-12,
            support_leak: 1e-8,
            sld_residual: 1e-8,
            compatibility: 1e-8,
            singular: 1e-12,
            bound_equality: 1e-6,
        }
    }
}
