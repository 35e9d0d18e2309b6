//! Numerical thresholds shared by the rank, Fredholm and residual checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative rank threshold: `s <= RANK_EPS * max(1, s_max)` counts as zero.
pub const RANK_EPS: f64 = 1e-9;
/// Singular values of `QP` at or below this are in the zero class.
pub const GAP_LO: f64 = 1e-9;
/// Singular values of `QP` at or above this are in the invertible class.
pub const GAP_HI: f64 = 1e-6;
/// Residual bound for constructed unitaries and conjugations.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Projection idempotence and self-adjointness.
pub const PROJ_TOL: f64 = 1e-10;
/// Unitarity checks on certificates.
pub const UNITARY_TOL: f64 = 1e-9;
/// Margin below 1 for the split-index norm conditions.
pub const SPLIT_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub rank_eps: f64,
    pub gap_lo: f64,
    pub gap_hi: f64,
    pub residual_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            rank_eps: RANK_EPS,
            gap_lo: GAP_LO,
            gap_hi: GAP_HI,
            residual_tol: RESIDUAL_TOL,
        }
    }
}

impl ToleranceConfig {
    /// All fields positive and finite, `rank_eps <= gap_lo < gap_hi`.
    ///
    /// The rank threshold and the zero class share the default 1e-9, so the
    /// first comparison is not strict.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rank_eps", self.rank_eps),
            ("gap_lo", self.gap_lo),
            ("gap_hi", self.gap_hi),
            ("residual_tol", self.residual_tol),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if self.rank_eps > self.gap_lo {
            return Err(Error::InvalidInput(format!(
                "rank_eps {} exceeds gap_lo {}",
                self.rank_eps, self.gap_lo
            )));
        }
        if self.gap_lo >= self.gap_hi {
            return Err(Error::InvalidInput(format!(
                "gap_lo {} must be below gap_hi {}",
                self.gap_lo, self.gap_hi
            )));
        }
        Ok(())
    }

    /// Absolute cutoff for a spectrum whose largest value is `s_max`.
    pub fn rank_cutoff(&self, s_max: f64) -> f64 {
        self.rank_eps * s_max.max(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ToleranceConfig::default().validate().unwrap();
    }

    #[test]
    fn ordering_enforced() {
        let d = ToleranceConfig::default();
        for bad in [
            ToleranceConfig { gap_lo: 1e-5, ..d },
            ToleranceConfig { rank_eps: 1e-8, ..d },
            ToleranceConfig { residual_tol: -1.0, ..d },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
