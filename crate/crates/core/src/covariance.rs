//! Representation of Ω in the `(X, Z)` basis and Rao-structure detection.
//!
//! For full-rank `X` and an annihilator `Z`,
//! `Ω = XΓXᵀ + XΞZᵀ + ZΞᵀXᵀ + ZΔZᵀ` with
//!
//! ```text
//! Γ = (XᵀX)⁻¹ XᵀΩX (XᵀX)⁻¹
//! Ξ = (XᵀX)⁻¹ XᵀΩZ (ZᵀZ)⁻¹
//! Δ = (ZᵀZ)⁻¹ ZᵀΩZ (ZᵀZ)⁻¹
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, RealMatrix};
use crate::model::GeneralLinearDesign;
use crate::tolerance::ToleranceConfig;

/// Agreement slack between two criteria that are equivalent in exact arithmetic.
pub(crate) const GRAY_ZONE: f64 = 1e3;

#[derive(Debug, Clone)]
pub struct CovarianceDecomposition {
    pub gamma: RealMatrix,
    pub xi: RealMatrix,
    pub delta: RealMatrix,
    pub x: RealMatrix,
    pub z: RealMatrix,
}

fn sym(m: RealMatrix) -> RealMatrix {
    (&m + m.transpose()) * 0.5
}

/// Decompose `Ω` using the design's canonical orthonormal `Z`.
pub fn decompose(d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<CovarianceDecomposition> {
    let x = d.x();
    let z = d.z();
    let om = d.omega();
    let b_inv = d.xtx_inv(tol)?;
    let ztz_inv = linalg::spd_inverse(&(z.transpose() * z), "Z^T Z", tol)?;
    let xb = x * &b_inv;
    let zc = z * &ztz_inv;
    let dec = CovarianceDecomposition {
        gamma: sym(xb.transpose() * om * &xb),
        xi: xb.transpose() * om * &zc,
        delta: sym(zc.transpose() * om * &zc),
        x: x.clone(),
        z: z.clone(),
    };
    let back = dec.assemble();
    let err = linalg::rel_diff(&back, om);
    if err > GRAY_ZONE * tol.equality_rel_tol {
        return Err(Error::InternalConsistency(format!(
            "recomposition of Omega is off by {err:.3e}"
        )));
    }
    Ok(dec)
}

impl CovarianceDecomposition {
    /// Blocks in an arbitrary basis; `z` need not annihilate `x`. Only
    /// `recompose` is meaningful for a non-annihilating `z`.
    pub fn from_blocks(
        x: RealMatrix,
        z: RealMatrix,
        gamma: RealMatrix,
        xi: RealMatrix,
        delta: RealMatrix,
    ) -> Result<Self> {
        let (n, k) = x.shape();
        let m = z.ncols();
        linalg::ensure_shape(&z, n, m, "Z")?;
        linalg::ensure_shape(&gamma, k, k, "Gamma")?;
        linalg::ensure_shape(&xi, k, m, "Xi")?;
        linalg::ensure_shape(&delta, m, m, "Delta")?;
        for (what, mat) in [("X", &x), ("Z", &z), ("Gamma", &gamma), ("Xi", &xi), ("Delta", &delta)] {
            linalg::ensure_finite(mat, what)?;
        }
        Ok(Self { gamma, xi, delta, x, z })
    }

    /// `[[Γ, Ξ], [Ξᵀ, Δ]]`.
    pub fn block_matrix(&self) -> RealMatrix {
        let k = self.gamma.nrows();
        let m = self.delta.nrows();
        let mut b = RealMatrix::zeros(k + m, k + m);
        b.view_mut((0, 0), (k, k)).copy_from(&self.gamma);
        b.view_mut((0, k), (k, m)).copy_from(&self.xi);
        b.view_mut((k, 0), (m, k)).copy_from(&self.xi.transpose());
        b.view_mut((k, k), (m, m)).copy_from(&self.delta);
        b
    }

    fn assemble(&self) -> RealMatrix {
        let xg = &self.x * &self.gamma * self.x.transpose();
        let xz = &self.x * &self.xi * self.z.transpose();
        let zd = &self.z * &self.delta * self.z.transpose();
        sym(xg + &xz + xz.transpose() + zd)
    }

    /// `XΓXᵀ + XΞZᵀ + ZΞᵀXᵀ + ZΔZᵀ`; the block matrix must be PD.
    pub fn recompose(&self, tol: &ToleranceConfig) -> Result<RealMatrix> {
        let b = self.block_matrix();
        if !(linalg::asymmetry(&self.gamma) <= tol.equality_rel_tol
            && linalg::asymmetry(&self.delta) <= tol.equality_rel_tol
            && linalg::is_spd(&b, tol)?)
        {
            return Err(Error::NotSpd {
                what: "block matrix [[Gamma, Xi], [Xi^T, Delta]]".into(),
            });
        }
        Ok(self.assemble())
    }

    /// `Ω⁻¹` assembled from the inverse blocks `A, B, Bᵀ, D`.
    pub fn block_inverse(&self, tol: &ToleranceConfig) -> Result<RealMatrix> {
        let cross = self.x.transpose() * &self.z;
        let scale = linalg::fro(&self.x) * linalg::fro(&self.z);
        if scale > 0.0 && linalg::fro(&cross) > tol.equality_rel_tol * scale {
            return Err(Error::Precondition("block inverse needs X^T Z = 0".into()));
        }
        let delta = linalg::require_spd(&self.delta, "Delta", tol)?;
        let delta_inv = linalg::spd_inverse(&delta, "Delta", tol)?;
        let xi_dinv = &self.xi * &delta_inv;
        let schur = sym(&self.gamma - &xi_dinv * self.xi.transpose());
        if !linalg::is_spd(&schur, tol)? {
            return Err(Error::NotSpd {
                what: "Schur complement Gamma - Xi Delta^-1 Xi^T".into(),
            });
        }
        let a = linalg::spd_inverse(&schur, "Schur complement", tol)?;
        let b = -(&a * &xi_dinv);
        let d = sym(&delta_inv + b.transpose() * &schur * &b);

        let b_inv = linalg::spd_inverse(&(self.x.transpose() * &self.x), "X^T X", tol)?;
        let ztz_inv = linalg::spd_inverse(&(self.z.transpose() * &self.z), "Z^T Z", tol)?;
        let p = &self.x * b_inv;
        let q = &self.z * ztz_inv;
        let pb = &p * &b * q.transpose();
        Ok(sym(&p * a * p.transpose() + &pb + pb.transpose() + &q * d * q.transpose()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RaoResiduals {
    /// `‖XᵀΩZ‖ / (‖X‖‖Ω‖‖Z‖)`.
    pub omega: f64,
    /// `‖XᵀΩ⁻¹Z‖ / (‖X‖‖Ω⁻¹‖‖Z‖)`.
    pub omega_inv: f64,
}

pub fn rao_residuals(d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<RaoResiduals> {
    let x = d.x();
    let z = d.z();
    let om_inv = d.omega_inv(tol)?;
    let nx = linalg::fro(x) * linalg::fro(z);
    let r = |m: &RealMatrix| linalg::fro(&(x.transpose() * m * z)) / (nx * linalg::fro(m));
    Ok(RaoResiduals {
        omega: r(d.omega()),
        omega_inv: r(&om_inv),
    })
}

/// Rao's structure `Ω = XΓXᵀ + ZΔZᵀ`, tested as `XᵀΩZ = 0` and cross-checked
/// against `XᵀΩ⁻¹Z = 0`.
pub fn has_rao_structure(d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<bool> {
    let r = rao_residuals(d, tol)?;
    let eps = tol.equality_rel_tol;
    let a = r.omega <= eps;
    let b = r.omega_inv <= eps;
    if a != b && r.omega.max(r.omega_inv) > GRAY_ZONE * eps {
        return Err(Error::InternalConsistency(format!(
            "Rao criteria disagree: X^T Omega Z gives {:.3e}, X^T Omega^-1 Z gives {:.3e}",
            r.omega, r.omega_inv
        )));
    }
    Ok(a)
}
