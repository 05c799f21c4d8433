use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical thresholds shared by every rank, subspace, equality and
/// definiteness decision in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Singular values below `rank_rel_tol * sigma_max` count as zero.
    pub rank_rel_tol: f64,
    /// Relative threshold for matrix and vector equality.
    pub equality_rel_tol: f64,
    /// Lower bound on eigenvalues normalized by the largest magnitude.
    pub psd_eig_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rank_rel_tol: 1e-10,
            equality_rel_tol: 1e-9,
            psd_eig_tol: 1e-10,
        }
    }
}

impl ToleranceConfig {
    pub const MAX: f64 = 1e-3;

    pub fn new(rank_rel_tol: f64, equality_rel_tol: f64, psd_eig_tol: f64) -> Result<Self> {
        let tol = Self {
            rank_rel_tol,
            equality_rel_tol,
            psd_eig_tol,
        };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rank_rel_tol", self.rank_rel_tol),
            ("equality_rel_tol", self.equality_rel_tol),
            ("psd_eig_tol", self.psd_eig_tol),
        ] {
            if !(v.is_finite() && v > 0.0 && v <= Self::MAX) {
                return Err(Error::invalid(
                    name,
                    format!("must lie in (0, {:e}], got {v:e}", Self::MAX),
                ));
            }
        }
        Ok(())
    }

    pub fn with_equality(mut self, equality_rel_tol: f64) -> Self {
        self.equality_rel_tol = equality_rel_tol;
        self
    }

    pub fn with_rank(mut self, rank_rel_tol: f64) -> Self {
        self.rank_rel_tol = rank_rel_tol;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let tol = ToleranceConfig::default();
        tol.validate().unwrap();
        assert_eq!(tol.rank_rel_tol, 1e-10);
        assert_eq!(tol.equality_rel_tol, 1e-9);
        assert_eq!(tol.psd_eig_tol, 1e-10);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(ToleranceConfig::new(0.0, 1e-9, 1e-10).is_err());
        assert!(ToleranceConfig::new(1e-10, 1e-2, 1e-10).is_err());
        assert!(ToleranceConfig::new(1e-10, 1e-9, f64::NAN).is_err());
        assert!(ToleranceConfig::new(1e-3, 1e-3, 1e-3).is_ok());
    }
}
