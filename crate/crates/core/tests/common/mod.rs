//! Independent oracles for the integration tests. Nothing here calls the
//! library's linear algebra; inverses are plain Gauss-Jordan and
//! determinants are exact integer Bareiss eliminations.

#![allow(dead_code)]

use bayeslin::scenarios;
use bayeslin::{GeneralLinearDesign, RealMatrix, RealVector, Tol};
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gauss-Jordan with partial pivoting.
pub fn gj_inverse(m: &RealMatrix) -> RealMatrix {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| m[(i, j)]).collect();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, piv);
        let p = a[col][col];
        assert!(p.abs() > 1e-300, "singular matrix in oracle");
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    RealMatrix::from_fn(n, n, |i, j| a[i][n + j])
}

/// `K Xᵀ (Φ + XKXᵀ)⁻¹`.
pub fn bl_oracle(x: &RealMatrix, phi: &RealMatrix, k: &RealMatrix) -> RealMatrix {
    k * x.transpose() * gj_inverse(&(phi + x * k * x.transpose()))
}

/// `(XᵀΦ⁻¹X + K)⁻¹ XᵀΦ⁻¹`.
pub fn gr_oracle(x: &RealMatrix, phi: &RealMatrix, k: &RealMatrix) -> RealMatrix {
    let pi = gj_inverse(phi);
    gj_inverse(&(x.transpose() * &pi * x + k)) * x.transpose() * pi
}

/// Exact determinant of an integer matrix by fraction-free elimination.
pub fn bareiss_det(m: &[Vec<i128>]) -> i128 {
    let n = m.len();
    let mut a = m.to_vec();
    let mut sign = 1;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&r| a[r][k] != 0) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

pub fn leading_minors(m: &[Vec<i128>]) -> Vec<i128> {
    (1..=m.len())
        .map(|s| {
            let sub: Vec<Vec<i128>> = m[..s].iter().map(|row| row[..s].to_vec()).collect();
            bareiss_det(&sub)
        })
        .collect()
}

pub fn max_abs(m: &RealMatrix) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

pub fn rel_fro(a: &RealMatrix, b: &RealMatrix) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1.0)
}

pub fn gauss_vec(n: usize, rng: &mut impl Rng) -> RealVector {
    RealVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)))
}

fn spectral(m: &RealMatrix, f: impl Fn(f64) -> f64) -> RealMatrix {
    let e = SymmetricEigen::new((m + m.transpose()) * 0.5);
    &e.eigenvectors * RealMatrix::from_diagonal(&e.eigenvalues.map(f)) * e.eigenvectors.transpose()
}

pub fn sym_sqrt(m: &RealMatrix) -> RealMatrix {
    spectral(m, |l| l.max(0.0).sqrt())
}

pub fn sym_inv_sqrt(m: &RealMatrix) -> RealMatrix {
    spectral(m, |l| 1.0 / l.sqrt())
}

/// Solves `(Γ+K₁)Γ⁻¹(Γ+K₁) = S₂` for `K₁` through
/// `Γ + K₁ = Γ^{1/2}(Γ^{-1/2} S₂ Γ^{-1/2})^{1/2} Γ^{1/2}`.
pub fn sqrt_construction(gamma: &RealMatrix, s2: &RealMatrix) -> RealMatrix {
    let gh = sym_sqrt(gamma);
    let gih = sym_inv_sqrt(gamma);
    let inner = sym_sqrt(&(&gih * s2 * &gih));
    let g = &gh * inner * &gh;
    let k1 = g - gamma;
    (&k1 + k1.transpose()) * 0.5
}

/// Random design with `n ∈ [lo, hi]`, `k ∈ [1, min(kmax, n − 1)]`.
pub fn random_design_dims(rng: &mut impl Rng, lo: usize, hi: usize, kmax: usize) -> (usize, usize) {
    let n = rng.random_range(lo..=hi);
    let k = rng.random_range(1..=kmax.min(n - 1));
    (n, k)
}

pub fn random_design(rng: &mut impl Rng, n: usize, k: usize, cond: f64) -> GeneralLinearDesign {
    let x = scenarios::random_design_matrix(n, k, rng);
    let om = scenarios::random_spd(n, cond, rng);
    GeneralLinearDesign::new(x, om, &Tol::default()).unwrap()
}

/// Rao-structured `Ω = XΓXᵀ + ZΔZᵀ` on a random design. Returns the design and `Γ`.
pub fn rao_design(rng: &mut impl Rng, n: usize, k: usize, unit_delta: bool) -> (GeneralLinearDesign, RealMatrix) {
    let tol = Tol::default();
    let base = GeneralLinearDesign::new(
        scenarios::random_design_matrix(n, k, rng),
        RealMatrix::identity(n, n),
        &tol,
    )
    .unwrap();
    let gamma = scenarios::random_spd(k, 10.0, rng);
    let delta = if unit_delta {
        RealMatrix::identity(n - k, n - k)
    } else {
        scenarios::random_spd(n - k, 10.0, rng)
    };
    let om = scenarios::rao_omega(&base, &gamma, &delta);
    (base.with_omega(om, &tol).unwrap(), gamma)
}

/// Non-Rao `Ω` with a cross block of Frobenius norm at least `xi_floor`.
pub fn non_rao_design(rng: &mut impl Rng, n: usize, k: usize, xi_floor: f64) -> (GeneralLinearDesign, RealMatrix) {
    let tol = Tol::default();
    let base = GeneralLinearDesign::new(
        scenarios::random_design_matrix(n, k, rng),
        RealMatrix::identity(n, n),
        &tol,
    )
    .unwrap();
    let m = n - k;
    let gamma = scenarios::random_spd(k, 5.0, rng) + RealMatrix::identity(k, k);
    let delta = scenarios::random_spd(m, 5.0, rng) + RealMatrix::identity(m, m);
    let raw = scenarios::random_matrix(k, m, rng);
    let target = rng.random_range(xi_floor.max(1e-12)..0.5_f64.max(2.0 * xi_floor));
    let xi = &raw * (target / raw.norm());
    let x = base.x();
    let z = base.z();
    let cross = x * &xi * z.transpose();
    let om = x * &gamma * x.transpose() + &cross + cross.transpose() + z * &delta * z.transpose();
    (base.with_omega((&om + om.transpose()) * 0.5, &tol).unwrap(), xi)
}
