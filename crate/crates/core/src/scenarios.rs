//! Reference fixtures and covariance generators: the three-observation
//! golden example, Rao's mixed-effects covariance, and a first-order spatial
//! autoregressive error process.

use nalgebra::dmatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, RealMatrix};
use crate::model::{DesignParts, GeneralLinearDesign};
use crate::tolerance::ToleranceConfig;

/// `Ω(a) = base + a · slope` for the golden example.
pub fn example_omega_affine() -> (RealMatrix, RealMatrix) {
    let base = dmatrix![6.0, -3.0, 4.0; -3.0, 6.0, -4.0; 4.0, -4.0, 0.0];
    let z = dmatrix![1.0; -1.0; 2.0];
    (base, &z * z.transpose())
}

/// `Ω(a)` without any definiteness check; positive definite only for `a > 8`.
pub fn example_omega(a: f64) -> RealMatrix {
    let (base, slope) = example_omega_affine();
    base + slope * a
}

#[derive(Debug, Clone)]
pub struct ExampleFixture {
    pub a: f64,
    pub design: GeneralLinearDesign,
    pub k1: RealMatrix,
    pub k2: RealMatrix,
    pub expected_map: RealMatrix,
    /// The annihilator as printed with the example. It does not satisfy
    /// `XᵀZ = 0`; the design carries the canonical `Z = e₃` instead.
    pub printed_z: RealMatrix,
    pub printed_gamma: RealMatrix,
    pub printed_xi: RealMatrix,
    pub printed_delta: RealMatrix,
}

pub const EXAMPLE_PD_BOUNDARY: f64 = 8.0;

pub fn example_fixture(a: f64) -> Result<ExampleFixture> {
    example_fixture_with(a, &ToleranceConfig::default())
}

pub fn example_fixture_with(a: f64, tol: &ToleranceConfig) -> Result<ExampleFixture> {
    if !(a.is_finite() && a > EXAMPLE_PD_BOUNDARY) {
        return Err(Error::Precondition(format!(
            "the example covariance is positive definite only for a > {EXAMPLE_PD_BOUNDARY}, got a = {a}"
        )));
    }
    let x = dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0];
    let design = DesignParts::new(x, example_omega(a)).build(tol)?;
    Ok(ExampleFixture {
        a,
        design,
        k1: dmatrix![3.0, 3.0; 3.0, 3.0],
        k2: dmatrix![1.0, 1.0; 1.0, 1.0],
        expected_map: dmatrix![1.0, 1.0, 0.0; 1.0, 1.0, 0.0] / 3.0,
        printed_z: dmatrix![1.0; -1.0; 2.0],
        printed_gamma: dmatrix![2.0, 1.0; 1.0, 2.0],
        printed_xi: dmatrix![2.0; -2.0],
        printed_delta: dmatrix![a],
    })
}

/// `I + XΓ̄Xᵀ + ZΔ̄Zᵀ` with the design's canonical `Z`.
pub fn rao_mixed_effects_omega(
    d: &GeneralLinearDesign,
    gamma_bar: &RealMatrix,
    delta_bar: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<RealMatrix> {
    let (n, k) = (d.n(), d.k());
    linalg::ensure_shape(gamma_bar, k, k, "GammaBar")?;
    linalg::ensure_shape(delta_bar, n - k, n - k, "DeltaBar")?;
    let g = linalg::require_psd(gamma_bar, "GammaBar", tol)?;
    let dl = linalg::require_psd(delta_bar, "DeltaBar", tol)?;
    let om = RealMatrix::identity(n, n) + d.x() * g * d.x().transpose() + d.z() * dl * d.z().transpose();
    Ok((&om + om.transpose()) * 0.5)
}

/// Mixed-effects `Ω` for a prior `K` with `K XᵀX Γ̄ = 0`, which makes
/// `β̂_BL(Ω, K) = β̂_BL(I, K)` for every `y`.
pub fn mixed_effects_pair(
    d: &GeneralLinearDesign,
    k: &RealMatrix,
    gamma_bar: &RealMatrix,
    delta_bar: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<RealMatrix> {
    linalg::ensure_shape(k, d.k(), d.k(), "K")?;
    linalg::require_psd(k, "K", tol)?;
    let om = rao_mixed_effects_omega(d, gamma_bar, delta_bar, tol)?;
    let prod = k * d.xtx() * gamma_bar;
    let scale = 1.0_f64.max(linalg::fro(k) * linalg::fro(&d.xtx()) * linalg::fro(gamma_bar));
    let r = linalg::fro(&prod) / scale;
    if r > tol.equality_rel_tol {
        return Err(Error::Precondition(format!("K X^T X GammaBar is not zero (relative residual {r:.3e})")));
    }
    Ok(om)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    pub c: RealMatrix,
    pub w: RealMatrix,
    /// Rows of `C` with no neighbours; their rows of `W` are zero.
    pub isolated: Vec<usize>,
}

/// `w_ij = c_ij / Σ_j c_ij` for a symmetric binary contiguity matrix.
pub fn row_normalized_weights(c: &RealMatrix) -> Result<SpatialWeights> {
    linalg::ensure_square(c, "C")?;
    linalg::ensure_finite(c, "C")?;
    let n = c.nrows();
    for i in 0..n {
        if c[(i, i)] != 0.0 {
            return Err(Error::invalid("C", format!("diagonal entry {i} is not zero")));
        }
        for j in 0..n {
            let v = c[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(Error::invalid("C", format!("entry ({i}, {j}) = {v} is not binary")));
            }
            if v != c[(j, i)] {
                return Err(Error::invalid("C", format!("not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut w = c.clone();
    let mut isolated = Vec::new();
    for (i, mut row) in w.row_iter_mut().enumerate() {
        let s: f64 = row.sum();
        if s == 0.0 {
            isolated.push(i);
        } else {
            row /= s;
        }
    }
    Ok(SpatialWeights { c: c.clone(), w, isolated })
}

/// `(I − ρW)⁻¹(I − ρWᵀ)⁻¹`, symmetrized.
pub fn spatial_ar1_omega(weights: &SpatialWeights, rho: f64, tol: &ToleranceConfig) -> Result<RealMatrix> {
    if !rho.is_finite() {
        return Err(Error::invalid("rho", "must be finite"));
    }
    let n = weights.w.nrows();
    if rho == 0.0 {
        return Ok(RealMatrix::identity(n, n));
    }
    let a = RealMatrix::identity(n, n) - &weights.w * rho;
    let sv = linalg::singular_values(&a);
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin <= tol.rank_rel_tol * smax {
        return Err(Error::invalid("rho", format!("I - rho W is singular at rho = {rho}")));
    }
    let a_inv = a
        .try_inverse()
        .ok_or_else(|| Error::invalid("rho", format!("I - rho W is singular at rho = {rho}")))?;
    let om = &a_inv * a_inv.transpose();
    Ok((&om + om.transpose()) * 0.5)
}

/// Ring contiguity on `4m` nodes. `W = C/2` is symmetric and its null space
/// is spanned by the two period-four patterns returned by
/// [`ring_null_space_basis`].
pub fn ring_weights(m: usize) -> Result<SpatialWeights> {
    if m == 0 {
        return Err(Error::invalid("m", "needs at least one block of four nodes"));
    }
    let n = 4 * m;
    let c = RealMatrix::from_fn(n, n, |i, j| {
        if (i + 1) % n == j || (j + 1) % n == i {
            1.0
        } else {
            0.0
        }
    });
    row_normalized_weights(&c)
}

/// Columns `(1, 0, −1, 0, …)` and `(0, 1, 0, −1, …)`, orthonormalized.
pub fn ring_null_space_basis(m: usize) -> RealMatrix {
    let n = 4 * m;
    let s = 1.0 / (n as f64 / 2.0).sqrt();
    RealMatrix::from_fn(n, 2, |i, j| match (i % 4, j) {
        (0, 0) | (1, 1) => s,
        (2, 0) | (3, 1) => -s,
        _ => 0.0,
    })
}

/// A spatial instance with `WXK = WᵀXK = 0`: the first two columns of `X`
/// span the null space of the ring weights and `K` vanishes outside that
/// block. Then `Ω⁻¹XK = XK` for every admissible `ρ`.
#[derive(Debug, Clone)]
pub struct SpatialInstance {
    pub weights: SpatialWeights,
    pub design: GeneralLinearDesign,
    pub k: RealMatrix,
    pub rho: f64,
}

pub fn spatial_null_space_instance(
    m: usize,
    extra_columns: usize,
    rho: f64,
    rng: &mut impl Rng,
    tol: &ToleranceConfig,
) -> Result<SpatialInstance> {
    let weights = ring_weights(m)?;
    let n = 4 * m;
    let k = 2 + extra_columns;
    if k >= n {
        return Err(Error::invalid("extra_columns", format!("needs 2 + extra < {n}")));
    }
    let mut x = RealMatrix::zeros(n, k);
    x.columns_mut(0, 2).copy_from(&ring_null_space_basis(m));
    for j in 2..k {
        for i in 0..n {
            x[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let g = random_matrix(2, 2, rng);
    let mut kk = RealMatrix::zeros(k, k);
    kk.view_mut((0, 0), (2, 2))
        .copy_from(&(&g * g.transpose() + RealMatrix::identity(2, 2) * 0.1));
    let omega = spatial_ar1_omega(&weights, rho, tol)?;
    let design = GeneralLinearDesign::new(x, omega, tol)?;
    Ok(SpatialInstance { weights, design, k: kk, rho })
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `Q diag(λ) Qᵀ` with `λ` log-uniform in `[1, cond]`.
pub fn random_spd(dim: usize, cond: f64, rng: &mut impl Rng) -> RealMatrix {
    let q = random_matrix(dim, dim, rng).qr().q();
    let lc = cond.max(1.0).ln();
    let d = RealMatrix::from_diagonal(&nalgebra::DVector::from_fn(dim, |_, _| (rng.random::<f64>() * lc).exp()));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Random `G Gᵀ` of the given rank.
pub fn random_psd_of_rank(dim: usize, rank: usize, rng: &mut impl Rng) -> RealMatrix {
    if rank == 0 {
        return RealMatrix::zeros(dim, dim);
    }
    let g = random_matrix(dim, rank, rng);
    let m = &g * g.transpose();
    (&m + m.transpose()) * 0.5
}

/// A random full-rank `n × k` design.
pub fn random_design_matrix(n: usize, k: usize, rng: &mut impl Rng) -> RealMatrix {
    loop {
        let x = random_matrix(n, k, rng);
        let sv = linalg::singular_values(&x);
        let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if smin > 1e-2 * smax {
            return x;
        }
    }
}

/// `XΓXᵀ + ZΔZᵀ` on the design's canonical basis.
pub fn rao_omega(d: &GeneralLinearDesign, gamma: &RealMatrix, delta: &RealMatrix) -> RealMatrix {
    let om = d.x() * gamma * d.x().transpose() + d.z() * delta * d.z().transpose();
    (&om + om.transpose()) * 0.5
}
