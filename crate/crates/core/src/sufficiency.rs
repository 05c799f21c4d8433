//! Linear sufficiency and completeness of a transform `F y`.
//!
//! With `T = Ω` (admissible because Ω is positive definite):
//! sufficient iff `C(X) ⊆ C(Ω Fᵀ)`, complete iff `C(FΩ) ⊆ C(FX)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators;
use crate::linalg::{self, RealMatrix};
use crate::model::GeneralLinearDesign;
use crate::tolerance::ToleranceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SufficiencyVerdict {
    pub sufficient: bool,
    pub complete: bool,
    pub residual_sufficient: f64,
    pub residual_complete: f64,
}

fn check_f(f: &RealMatrix, d: &GeneralLinearDesign) -> Result<()> {
    if f.ncols() != d.n() {
        return Err(Error::dims("F", format!("{} columns", d.n()), format!("{} columns", f.ncols())));
    }
    linalg::ensure_finite(f, "F")
}

pub fn sufficiency_residual(f: &RealMatrix, d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<f64> {
    check_f(f, d)?;
    linalg::column_space_residual(d.x(), &(d.omega() * f.transpose()), tol)
}

pub fn completeness_residual(f: &RealMatrix, d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<f64> {
    check_f(f, d)?;
    linalg::column_space_residual(&(f * d.omega()), &(f * d.x()), tol)
}

pub fn is_linearly_sufficient(f: &RealMatrix, d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<bool> {
    Ok(sufficiency_residual(f, d, tol)? <= tol.equality_rel_tol)
}

pub fn is_linearly_complete(f: &RealMatrix, d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<bool> {
    Ok(completeness_residual(f, d, tol)? <= tol.equality_rel_tol)
}

pub fn verdict(f: &RealMatrix, d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<SufficiencyVerdict> {
    let rs = sufficiency_residual(f, d, tol)?;
    let rc = completeness_residual(f, d, tol)?;
    Ok(SufficiencyVerdict {
        sufficient: rs <= tol.equality_rel_tol,
        complete: rc <= tol.equality_rel_tol,
        residual_sufficient: rs,
        residual_complete: rc,
    })
}

/// Verdict for `F = β̂_BL(Ω, K)`, checked against the known classification:
/// sufficient exactly when `K` is positive definite, complete always.
pub fn classify_bayes_linear(
    d: &GeneralLinearDesign,
    k: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<SufficiencyVerdict> {
    let f = estimators::bayes_linear_map(d, d.omega(), k, tol)?.l;
    let v = verdict(&f, d, tol)?;
    let k_pd = linalg::is_spd(k, tol)?;
    if v.sufficient != k_pd || !v.complete {
        return Err(Error::InternalConsistency(format!(
            "Bayes linear classification mismatch: sufficient={} (K positive definite: {k_pd}), complete={} \
             (residuals {:.3e}, {:.3e})",
            v.sufficient, v.complete, v.residual_sufficient, v.residual_complete
        )));
    }
    Ok(v)
}

#[derive(Debug, Clone)]
pub struct BlueRecovery {
    /// n×m map with `L F y` the BLUE of `Xβ` when recovery succeeds.
    pub l: RealMatrix,
    /// `‖LFX − X‖ / max(1, ‖X‖)`.
    pub residual_fx: f64,
    /// `‖LFΩZ‖ / max(1, ‖ΩZ‖)`.
    pub residual_fomega_z: f64,
    /// `‖LF − X β̂_GLS‖ / max(1, ‖X β̂_GLS‖)`.
    pub residual_blue: f64,
}

impl BlueRecovery {
    pub fn succeeded(&self, tol: &ToleranceConfig) -> bool {
        self.residual_fx <= tol.equality_rel_tol && self.residual_fomega_z <= tol.equality_rel_tol
    }
}

/// Minimal-norm least-squares solution of `L [FX, FΩZ] = [X, 0]`.
pub fn recover_blue_map(f: &RealMatrix, d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<BlueRecovery> {
    check_f(f, d)?;
    let (n, k) = (d.n(), d.k());
    let m = n - k;
    let fx = f * d.x();
    let omz = d.omega() * d.z();
    let fomz = f * &omz;
    let rows = f.nrows();
    let mut a = RealMatrix::zeros(rows, n);
    a.columns_mut(0, k).copy_from(&fx);
    a.columns_mut(k, m).copy_from(&fomz);
    let mut rhs = RealMatrix::zeros(n, n);
    rhs.columns_mut(0, k).copy_from(d.x());

    let svd = linalg::svd(&a);
    let pinv = svd.pseudo_inverse(tol.rank_rel_tol * svd.smax().max(f64::MIN_POSITIVE));
    let l = rhs * pinv;

    let blue = d.x() * estimators::gls_map(d, tol)?.l;
    let lf = &l * f;
    Ok(BlueRecovery {
        residual_fx: linalg::fro(&(&l * &fx - d.x())) / 1.0_f64.max(linalg::fro(d.x())),
        residual_fomega_z: linalg::fro(&(&l * &fomz)) / 1.0_f64.max(linalg::fro(&omz)),
        residual_blue: linalg::fro(&(lf - &blue)) / 1.0_f64.max(linalg::fro(&blue)),
        l,
    })
}
