//! Tolerance-aware dense matrix primitives.
//!
//! Rank and subspace decisions go through the singular value decomposition;
//! column-space questions are answered with orthogonal projectors so that a
//! containment test never depends on how a least-squares solve is
//! conditioned. Definiteness uses the symmetric eigendecomposition.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tolerance::ToleranceConfig;

pub type RealMatrix = DMatrix<f64>;
pub type RealVector = DVector<f64>;

pub fn ensure_finite(m: &RealMatrix, what: &str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite {
                    what: what.to_string(),
                    row: i,
                    col: j,
                });
            }
        }
    }
    Ok(())
}

fn ensure_nonempty(m: &RealMatrix, what: &str) -> Result<()> {
    if m.is_empty() {
        return Err(Error::invalid(what, "matrix is empty"));
    }
    Ok(())
}

pub(crate) fn ensure_square(m: &RealMatrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::dims(
            what,
            "a square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub(crate) fn ensure_shape(m: &RealMatrix, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::dims(
            what,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

/// Frobenius norm.
pub fn fro(m: &RealMatrix) -> f64 {
    m.norm()
}

/// `‖a − b‖_F / max(1, ‖a‖_F, ‖b‖_F)`.
pub fn rel_diff(a: &RealMatrix, b: &RealMatrix) -> f64 {
    let scale = 1.0_f64.max(fro(a)).max(fro(b));
    fro(&(a - b)) / scale
}

/// Thin SVD `m = U diag(s) Vᵀ` with `s` in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: RealMatrix,
    pub s: RealVector,
    pub v_t: RealMatrix,
}

impl Svd {
    pub fn smax(&self) -> f64 {
        self.s.iter().cloned().fold(0.0_f64, f64::max)
    }

    pub fn smin(&self) -> f64 {
        self.s.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Moore-Penrose inverse, dropping singular values at or below `cut`.
    pub fn pseudo_inverse(&self, cut: f64) -> RealMatrix {
        let mut out = RealMatrix::zeros(self.v_t.ncols(), self.u.nrows());
        for (i, &s) in self.s.iter().enumerate() {
            if s > cut {
                out += self.v_t.row(i).transpose() * self.u.column(i).transpose() / s;
            }
        }
        out
    }

    fn reconstruction_error(&self, m: &RealMatrix) -> f64 {
        fro(&(&self.u * RealMatrix::from_diagonal(&self.s) * &self.v_t - m))
    }
}

fn sorted(u: RealMatrix, s: RealVector, v_t: RealMatrix) -> Svd {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    Svd {
        u: u.select_columns(order.iter()),
        s: RealVector::from_iterator(s.len(), order.iter().map(|&i| s[i])),
        v_t: v_t.select_rows(order.iter()),
    }
}

/// One-sided Jacobi on the columns of a tall matrix.
fn jacobi_svd(m: &RealMatrix) -> Svd {
    let (r, c) = m.shape();
    if r < c {
        let t = jacobi_svd(&m.transpose());
        return Svd { u: t.v_t.transpose(), s: t.s, v_t: t.u.transpose() };
    }
    let mut a = m.clone();
    let mut v = RealMatrix::identity(c, c);
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = cs * x - sn * y;
                        mat[(i, q)] = sn * x + cs * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let s = RealVector::from_iterator(c, (0..c).map(|j| a.column(j).norm()));
    let mut u = RealMatrix::zeros(r, c);
    for j in 0..c {
        if s[j] > 0.0 {
            u.set_column(j, &(a.column(j) / s[j]));
        }
    }
    sorted(u, s, v.transpose())
}

/// SVD whose factorization is checked against `m`.
///
/// The LAPACK-free bidiagonal solver occasionally returns factors that do
/// not reproduce rank-deficient inputs; the transpose and then a Jacobi
/// sweep are tried in turn.
pub fn svd(m: &RealMatrix) -> Svd {
    let scale = fro(m).max(f64::MIN_POSITIVE);
    let limit = 1e3 * f64::EPSILON * scale * (m.nrows().max(m.ncols()) as f64);
    let direct = m.clone().svd(true, true);
    let d = sorted(direct.u.expect("u requested"), direct.singular_values, direct.v_t.expect("v_t requested"));
    if d.reconstruction_error(m) <= limit {
        return d;
    }
    let t = m.transpose().svd(true, true);
    let t = sorted(t.v_t.expect("v_t requested").transpose(), t.singular_values, t.u.expect("u requested").transpose());
    if t.reconstruction_error(m) <= limit {
        return t;
    }
    jacobi_svd(m)
}

pub fn singular_values(m: &RealMatrix) -> RealVector {
    svd(m).s
}

/// `σ_max / σ_min`, infinite for a singular matrix.
pub fn condition_number(m: &RealMatrix) -> f64 {
    let f = svd(m);
    f.smax() / f.smin()
}

/// Number of singular values exceeding `rank_rel_tol * sigma_max`.
pub fn numeric_rank(m: &RealMatrix, tol: &ToleranceConfig) -> Result<usize> {
    ensure_nonempty(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    let sv = singular_values(m);
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let cut = tol.rank_rel_tol * smax;
    Ok(sv.iter().filter(|&&s| s > cut).count())
}

/// Orthonormal basis of the column space `C(m)`, empty (rows x 0) for a zero matrix.
pub fn column_basis(m: &RealMatrix, tol: &ToleranceConfig) -> Result<RealMatrix> {
    ensure_finite(m, "matrix")?;
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return Ok(RealMatrix::zeros(rows, 0));
    }
    let f = svd(m);
    let smax = f.smax();
    let cut = tol.rank_rel_tol * smax;
    let keep: Vec<usize> = (0..f.s.len()).filter(|&i| smax > 0.0 && f.s[i] > cut).collect();
    Ok(f.u.select_columns(keep.iter()))
}

/// Orthogonal projector onto `C(m)`.
pub fn projector(m: &RealMatrix, tol: &ToleranceConfig) -> Result<RealMatrix> {
    let u = column_basis(m, tol)?;
    Ok(&u * u.transpose())
}

/// Normalized residual `‖(I − P_B) A‖_F / max(1, ‖A‖_F)`.
pub fn column_space_residual(a: &RealMatrix, b: &RealMatrix, tol: &ToleranceConfig) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::dims(
            "column_space_contains",
            format!("{} rows in both operands", a.nrows()),
            format!("{} rows", b.nrows()),
        ));
    }
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")?;
    let u = column_basis(b, tol)?;
    let outside = a - &u * (u.transpose() * a);
    Ok(fro(&outside) / 1.0_f64.max(fro(a)))
}

/// True iff every column of `a` lies in `C(b)`.
pub fn column_space_contains(a: &RealMatrix, b: &RealMatrix, tol: &ToleranceConfig) -> Result<bool> {
    Ok(column_space_residual(a, b, tol)? <= tol.equality_rel_tol)
}

/// Orthonormal basis `Z` (n x (n − k)) of the orthogonal complement of `C(x)`.
///
/// Columns are sign-normalized so that the entry of largest magnitude is
/// positive, which makes the basis deterministic for a given `x`.
pub fn orthogonal_complement_basis(x: &RealMatrix, tol: &ToleranceConfig) -> Result<RealMatrix> {
    ensure_nonempty(x, "X")?;
    ensure_finite(x, "X")?;
    let (n, k) = x.shape();
    let rank = numeric_rank(x, tol)?;
    if rank < k {
        return Err(Error::RankDeficient {
            what: "X".into(),
            expected: k,
            found: rank,
        });
    }
    if n <= k {
        return Err(Error::invalid("X", format!("needs more rows than columns, got {n}x{k}")));
    }
    let u = column_basis(x, tol)?;
    let complement = RealMatrix::identity(n, n) - &u * u.transpose();
    let eig = SymmetricEigen::new(complement);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut z = eig.eigenvectors.select_columns(order[..n - k].iter());
    // Re-orthonormalize; eigenvectors of a repeated eigenvalue are only
    // orthonormal up to the eigen solver's accuracy.
    let qr = z.clone().qr();
    z = qr.q();
    for mut col in z.column_iter_mut() {
        let (imax, _) = col
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |acc, (i, v)| if v.abs() > acc.1 + 1e-12 { (i, v.abs()) } else { acc });
        if col[imax] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(z)
}

/// `‖m − mᵀ‖_F / max(1, ‖m‖_F)`.
pub fn asymmetry(m: &RealMatrix) -> f64 {
    fro(&(m - m.transpose())) / 1.0_f64.max(fro(m))
}

/// Symmetrize a matrix declared symmetric. Asymmetry above `equality_rel_tol`
/// is an error rather than something to silently average away.
pub fn symmetrize_checked(m: &RealMatrix, what: &str, tol: &ToleranceConfig) -> Result<RealMatrix> {
    ensure_square(m, what)?;
    ensure_finite(m, what)?;
    let asym = asymmetry(m);
    if asym > tol.equality_rel_tol {
        return Err(Error::NotSymmetric {
            what: what.to_string(),
            asymmetry: asym,
        });
    }
    Ok((m + m.transpose()) * 0.5)
}

fn sym_eigen(m: &RealMatrix) -> SymmetricEigen<f64, Dyn> {
    SymmetricEigen::new((m + m.transpose()) * 0.5)
}

fn eig_extremes(eig: &SymmetricEigen<f64, Dyn>) -> (f64, f64) {
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let maxabs = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    (min, maxabs)
}

/// Symmetric (within `equality_rel_tol`) with smallest eigenvalue above
/// `psd_eig_tol * max|λ|`.
pub fn is_spd(m: &RealMatrix, tol: &ToleranceConfig) -> Result<bool> {
    ensure_square(m, "matrix")?;
    ensure_nonempty(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    if asymmetry(m) > tol.equality_rel_tol {
        return Ok(false);
    }
    let (min, maxabs) = eig_extremes(&sym_eigen(m));
    Ok(maxabs > 0.0 && min > tol.psd_eig_tol * maxabs)
}

/// Symmetric with every eigenvalue at least `−psd_eig_tol * max(1, max|λ|)`.
pub fn is_psd(m: &RealMatrix, tol: &ToleranceConfig) -> Result<bool> {
    ensure_square(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    if m.is_empty() {
        return Ok(true);
    }
    if asymmetry(m) > tol.equality_rel_tol {
        return Ok(false);
    }
    let (min, maxabs) = eig_extremes(&sym_eigen(m));
    Ok(min >= -tol.psd_eig_tol * maxabs.max(1.0))
}

pub(crate) fn require_spd(m: &RealMatrix, what: &str, tol: &ToleranceConfig) -> Result<RealMatrix> {
    let s = symmetrize_checked(m, what, tol)?;
    if !is_spd(&s, tol)? {
        return Err(Error::NotSpd { what: what.to_string() });
    }
    Ok(s)
}

pub(crate) fn require_psd(m: &RealMatrix, what: &str, tol: &ToleranceConfig) -> Result<RealMatrix> {
    let s = symmetrize_checked(m, what, tol)?;
    if !is_psd(&s, tol)? {
        return Err(Error::NotPsd { what: what.to_string() });
    }
    Ok(s)
}

/// Cholesky factor of an already validated SPD matrix.
pub(crate) fn cholesky(m: &RealMatrix, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new((m + m.transpose()) * 0.5).ok_or_else(|| Error::NotSpd { what: what.to_string() })
}

/// Solve `a · x = b` for SPD `a`.
pub fn spd_solve(a: &RealMatrix, b: &RealMatrix, what: &str, tol: &ToleranceConfig) -> Result<RealMatrix> {
    let a = require_spd(a, what, tol)?;
    let chol = cholesky(&a, what)?;
    Ok(chol.solve(b))
}

/// Explicit inverse of an SPD matrix, symmetrized.
pub fn spd_inverse(a: &RealMatrix, what: &str, tol: &ToleranceConfig) -> Result<RealMatrix> {
    let n = a.nrows();
    let inv = spd_solve(a, &RealMatrix::identity(n, n), what, tol)?;
    Ok((&inv + inv.transpose()) * 0.5)
}

/// `(Φ + X K Xᵀ)⁻¹` via `Φ⁻¹ − Φ⁻¹X(K⁻¹ + XᵀΦ⁻¹X)⁻¹XᵀΦ⁻¹`.
///
/// Requires an invertible `K`; a singular `K` must go through a direct
/// inversion of `Φ + XKXᵀ` instead.
pub fn woodbury_inverse(
    phi: &RealMatrix,
    x: &RealMatrix,
    k: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<RealMatrix> {
    let n = phi.nrows();
    ensure_shape(phi, n, n, "Phi")?;
    ensure_shape(x, n, x.ncols(), "X")?;
    ensure_shape(k, x.ncols(), x.ncols(), "K")?;
    ensure_finite(x, "X")?;
    let phi = require_spd(phi, "Phi", tol)?;
    let k = symmetrize_checked(k, "K", tol)?;
    if !is_spd(&k, tol)? {
        return Err(Error::Unsupported(
            "K is singular or indefinite; invert Phi + X K X^T directly".into(),
        ));
    }
    let phi_inv = spd_inverse(&phi, "Phi", tol)?;
    let k_inv = spd_inverse(&k, "K", tol)?;
    let phi_inv_x = &phi_inv * x;
    let inner = k_inv + x.transpose() * &phi_inv_x;
    let chol = cholesky(&inner, "K^-1 + X^T Phi^-1 X")?;
    let correction = &phi_inv_x * chol.solve(&phi_inv_x.transpose());
    let w = phi_inv - correction;
    Ok((&w + w.transpose()) * 0.5)
}

fn spectral_map(m: &RealMatrix, what: &str, tol: &ToleranceConfig, f: impl Fn(f64) -> f64) -> Result<RealMatrix> {
    let m = require_spd(m, what, tol)?;
    let eig = SymmetricEigen::new(m);
    let d = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    let out = v * RealMatrix::from_diagonal(&d) * v.transpose();
    Ok((&out + out.transpose()) * 0.5)
}

/// Symmetric `M^{-1/2}` from the eigendecomposition.
pub fn inverse_sqrt_spd(m: &RealMatrix, tol: &ToleranceConfig) -> Result<RealMatrix> {
    spectral_map(m, "matrix", tol, |l| 1.0 / l.sqrt())
}

/// Symmetric `M^{1/2}` from the eigendecomposition.
pub fn sqrt_spd(m: &RealMatrix, tol: &ToleranceConfig) -> Result<RealMatrix> {
    spectral_map(m, "matrix", tol, f64::sqrt)
}

/// Symmetric square root of a PSD matrix; eigenvalues within tolerance of
/// zero are clipped.
pub fn sqrt_psd(m: &RealMatrix, what: &str, tol: &ToleranceConfig) -> Result<RealMatrix> {
    let m = require_psd(m, what, tol)?;
    if m.is_empty() {
        return Ok(m);
    }
    let eig = SymmetricEigen::new(m);
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * RealMatrix::from_diagonal(&d) * v.transpose())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &RealMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = sym_eigen(m).eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Solve a general square system, used only where the coefficient matrix is
/// not symmetric.
pub(crate) fn lu_solve(a: &RealMatrix, b: &RealMatrix, what: &str) -> Result<RealMatrix> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::invalid(what, "singular system"))
}
