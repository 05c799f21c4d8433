//! Linear estimator maps `β̂ = L y` for the Bayes linear and general ridge
//! families, plus generalized residual sums of squares.
//!
//! The `*_kernel` functions work on bare `(X, Φ, K)` and do not require a
//! validated design; the risk module uses them on square designs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, RealMatrix, RealVector};
use crate::model::GeneralLinearDesign;
use crate::tolerance::ToleranceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorFamily {
    BayesLinear,
    GeneralRidge,
    Ols,
    Gls,
    OrdinaryRidge,
    Shrinkage,
    Custom,
}

impl EstimatorFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorFamily::BayesLinear => "bayes-linear",
            EstimatorFamily::GeneralRidge => "general-ridge",
            EstimatorFamily::Ols => "ols",
            EstimatorFamily::Gls => "gls",
            EstimatorFamily::OrdinaryRidge => "ordinary-ridge",
            EstimatorFamily::Shrinkage => "shrinkage",
            EstimatorFamily::Custom => "custom",
        }
    }
}

/// A k×n map together with the weight matrix and regularizer that built it.
#[derive(Debug, Clone)]
pub struct LinearEstimatorMap {
    pub l: RealMatrix,
    pub family: EstimatorFamily,
    pub phi: RealMatrix,
    pub k: RealMatrix,
}

impl LinearEstimatorMap {
    pub fn custom(l: RealMatrix) -> Self {
        let (k, n) = l.shape();
        Self {
            l,
            family: EstimatorFamily::Custom,
            phi: RealMatrix::identity(n, n),
            k: RealMatrix::zeros(k, k),
        }
    }

    pub fn apply(&self, y: &RealVector) -> Result<RealVector> {
        apply_map(self, y)
    }
}

fn check_inputs(
    x: &RealMatrix,
    phi: &RealMatrix,
    k: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<(RealMatrix, RealMatrix)> {
    let (n, kk) = x.shape();
    linalg::ensure_finite(x, "X")?;
    linalg::ensure_shape(phi, n, n, "Phi")?;
    linalg::ensure_shape(k, kk, kk, "K")?;
    let phi = linalg::require_spd(phi, "Phi", tol)?;
    let k = linalg::require_psd(k, "K", tol)?;
    Ok((phi, k))
}

/// `K Xᵀ (Φ + X K Xᵀ)⁻¹` by a Cholesky solve; defined for singular `K`.
pub fn bl_kernel(x: &RealMatrix, phi: &RealMatrix, k: &RealMatrix, tol: &ToleranceConfig) -> Result<RealMatrix> {
    let (phi, k) = check_inputs(x, phi, k, tol)?;
    let xk = x * &k;
    let a = &phi + &xk * x.transpose();
    let chol = linalg::cholesky(&a, "Phi + X K X^T")?;
    Ok(chol.solve(&xk).transpose())
}

/// Returns `(Φ⁻¹X, XᵀΦ⁻¹X)`.
fn weighted_gram(x: &RealMatrix, phi: &RealMatrix) -> Result<(RealMatrix, RealMatrix)> {
    let chol = linalg::cholesky(phi, "Phi")?;
    let p = chol.solve(x);
    let g = x.transpose() * &p;
    Ok((p, (&g + g.transpose()) * 0.5))
}

/// `K[(XᵀΦ⁻¹X)⁻¹ + K]⁻¹(XᵀΦ⁻¹X)⁻¹XᵀΦ⁻¹`; needs full column rank `X`.
pub fn bl_alt_kernel(
    x: &RealMatrix,
    phi: &RealMatrix,
    k: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<RealMatrix> {
    let (phi, k) = check_inputs(x, phi, k, tol)?;
    let (p, g) = weighted_gram(x, &phi)?;
    let g_chol = linalg::cholesky(&g, "X^T Phi^-1 X")?;
    let g_inv_pt = g_chol.solve(&p.transpose());
    let g_inv = g_chol.inverse();
    let m = (&g_inv + g_inv.transpose()) * 0.5 + &k;
    let m_chol = linalg::cholesky(&m, "(X^T Phi^-1 X)^-1 + K")?;
    Ok(&k * m_chol.solve(&g_inv_pt))
}

/// `(XᵀΦ⁻¹X + K)⁻¹XᵀΦ⁻¹`; `K = 0` gives weighted least squares.
pub fn gr_kernel(x: &RealMatrix, phi: &RealMatrix, k: &RealMatrix, tol: &ToleranceConfig) -> Result<RealMatrix> {
    let (phi, k) = check_inputs(x, phi, k, tol)?;
    let (p, g) = weighted_gram(x, &phi)?;
    let chol = linalg::cholesky(&(g + k), "X^T Phi^-1 X + K")?;
    Ok(chol.solve(&p.transpose()))
}

fn wrap(l: RealMatrix, family: EstimatorFamily, phi: &RealMatrix, k: &RealMatrix) -> LinearEstimatorMap {
    LinearEstimatorMap {
        l,
        family,
        phi: (phi + phi.transpose()) * 0.5,
        k: (k + k.transpose()) * 0.5,
    }
}

pub fn bayes_linear_map(
    d: &GeneralLinearDesign,
    phi: &RealMatrix,
    k: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<LinearEstimatorMap> {
    let l = bl_kernel(d.x(), phi, k, tol)?;
    Ok(wrap(l, EstimatorFamily::BayesLinear, phi, k))
}

pub fn bayes_linear_alt_map(
    d: &GeneralLinearDesign,
    phi: &RealMatrix,
    k: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<LinearEstimatorMap> {
    let l = bl_alt_kernel(d.x(), phi, k, tol)?;
    Ok(wrap(l, EstimatorFamily::BayesLinear, phi, k))
}

pub fn general_ridge_map(
    d: &GeneralLinearDesign,
    phi: &RealMatrix,
    k: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<LinearEstimatorMap> {
    let l = gr_kernel(d.x(), phi, k, tol)?;
    Ok(wrap(l, EstimatorFamily::GeneralRidge, phi, k))
}

/// `ρ (XᵀΦ⁻¹X)⁻¹`.
pub fn shrinkage_regularizer(
    d: &GeneralLinearDesign,
    phi: &RealMatrix,
    rho: f64,
    tol: &ToleranceConfig,
) -> Result<RealMatrix> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid("rho", format!("must be finite and > 0, got {rho}")));
    }
    linalg::ensure_shape(phi, d.n(), d.n(), "Phi")?;
    let phi = linalg::require_spd(phi, "Phi", tol)?;
    let (_, g) = weighted_gram(d.x(), &phi)?;
    Ok(linalg::spd_inverse(&g, "X^T Phi^-1 X", tol)? * rho)
}

pub fn ols_map(d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<LinearEstimatorMap> {
    let mut m = general_ridge_map(d, &d.identity_n(), &RealMatrix::zeros(d.k(), d.k()), tol)?;
    m.family = EstimatorFamily::Ols;
    Ok(m)
}

pub fn gls_map(d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<LinearEstimatorMap> {
    let mut m = general_ridge_map(d, d.omega(), &RealMatrix::zeros(d.k(), d.k()), tol)?;
    m.family = EstimatorFamily::Gls;
    Ok(m)
}

/// `(XᵀX + λI)⁻¹Xᵀ`.
pub fn ordinary_ridge_map(d: &GeneralLinearDesign, lambda: f64, tol: &ToleranceConfig) -> Result<LinearEstimatorMap> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("lambda", format!("must be finite and >= 0, got {lambda}")));
    }
    let k = RealMatrix::identity(d.k(), d.k()) * lambda;
    let mut m = general_ridge_map(d, &d.identity_n(), &k, tol)?;
    m.family = EstimatorFamily::OrdinaryRidge;
    Ok(m)
}

/// Bayes linear map with the shrinkage regularizer `ρ (XᵀΦ⁻¹X)⁻¹`.
pub fn shrinkage_map(
    d: &GeneralLinearDesign,
    phi: &RealMatrix,
    rho: f64,
    tol: &ToleranceConfig,
) -> Result<LinearEstimatorMap> {
    let k = shrinkage_regularizer(d, phi, rho, tol)?;
    let mut m = bayes_linear_map(d, phi, &k, tol)?;
    m.family = EstimatorFamily::Shrinkage;
    Ok(m)
}

pub fn apply_map(m: &LinearEstimatorMap, y: &RealVector) -> Result<RealVector> {
    if y.len() != m.l.ncols() {
        return Err(Error::dims("y", m.l.ncols(), y.len()));
    }
    Ok(&m.l * y)
}

/// `‖Φ^{-1/2}(y − X L y)‖²` for an arbitrary map `L`.
pub fn rss_of_map(
    x: &RealMatrix,
    phi: &RealMatrix,
    l: &RealMatrix,
    y: &RealVector,
    tol: &ToleranceConfig,
) -> Result<f64> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::dims("y", n, y.len()));
    }
    linalg::ensure_shape(l, x.ncols(), n, "L")?;
    let s = linalg::inverse_sqrt_spd(phi, tol)?;
    let r = y - x * (l * y);
    Ok((s * r).norm_squared())
}

/// Generalized RSS of `β̂_BL(Φ, K)`, returned as the quadratic form
/// `yᵀ S Φ S y` with `S = (Φ + XKXᵀ)⁻¹` after checking it against the
/// norm form `‖Φ^{-1/2}(y − Xβ̂)‖²`.
pub fn generalized_rss(
    d: &GeneralLinearDesign,
    phi: &RealMatrix,
    k: &RealMatrix,
    y: &RealVector,
    tol: &ToleranceConfig,
) -> Result<f64> {
    bl_rss_kernel(d.x(), phi, k, y, tol)
}

pub(crate) fn bl_rss_kernel(
    x: &RealMatrix,
    phi: &RealMatrix,
    k: &RealMatrix,
    y: &RealVector,
    tol: &ToleranceConfig,
) -> Result<f64> {
    if y.len() != x.nrows() {
        return Err(Error::dims("y", x.nrows(), y.len()));
    }
    let (phi, k) = check_inputs(x, phi, k, tol)?;
    let a = &phi + x * &k * x.transpose();
    let chol = linalg::cholesky(&a, "Phi + X K X^T")?;
    let sy = chol.solve(y);
    let quad = sy.dot(&(&phi * &sy));

    let l = chol.solve(&(x * &k)).transpose();
    let norm_form = rss_of_map(x, &phi, &l, y, tol)?;

    let phi_inv_norm = 1.0 / linalg::sym_eigenvalues(&phi)[0];
    let slack = 1e3 * tol.equality_rel_tol * quad.abs().max(norm_form.abs()) + 1e-12 * y.norm_squared() * phi_inv_norm;
    if (quad - norm_form).abs() > slack {
        return Err(Error::InternalConsistency(format!(
            "generalized RSS forms disagree: quadratic {quad:e}, norm {norm_form:e}"
        )));
    }
    Ok(quad.max(0.0))
}
