//! The general linear model instance and the prior-moment summary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, RealMatrix, RealVector};
use crate::tolerance::ToleranceConfig;

/// Unvalidated design input, as read from a problem file.
#[derive(Debug, Clone)]
pub struct DesignParts {
    pub x: RealMatrix,
    pub omega: RealMatrix,
    pub z: Option<RealMatrix>,
    pub sigma2: Option<f64>,
}

impl DesignParts {
    pub fn new(x: RealMatrix, omega: RealMatrix) -> Self {
        Self {
            x,
            omega,
            z: None,
            sigma2: None,
        }
    }

    pub fn with_z(mut self, z: RealMatrix) -> Self {
        self.z = Some(z);
        self
    }

    pub fn with_sigma2(mut self, sigma2: f64) -> Self {
        self.sigma2 = Some(sigma2);
        self
    }

    pub fn build(self, tol: &ToleranceConfig) -> Result<GeneralLinearDesign> {
        GeneralLinearDesign::from_parts(self, tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Magnitude behind the decision, where one exists.
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn failed(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Checker {
    checks: Vec<ValidationCheck>,
    first_error: Option<Error>,
}

impl Checker {
    fn record(&mut self, name: &'static str, residual: Option<f64>, outcome: std::result::Result<(), Error>) {
        let (passed, detail) = match outcome {
            Ok(()) => (true, None),
            Err(e) => {
                let msg = e.to_string();
                if self.first_error.is_none() {
                    self.first_error = Some(e);
                }
                (false, Some(msg))
            }
        };
        self.checks.push(ValidationCheck {
            name,
            passed,
            residual,
            detail,
        });
    }
}

fn run_checks(p: &DesignParts, tol: &ToleranceConfig) -> Checker {
    let mut c = Checker {
        checks: Vec::new(),
        first_error: None,
    };

    let finite = linalg::ensure_finite(&p.x, "X")
        .and_then(|_| linalg::ensure_finite(&p.omega, "Omega"))
        .and_then(|_| match &p.z {
            Some(z) => linalg::ensure_finite(z, "Z"),
            None => Ok(()),
        });
    let finite_ok = finite.is_ok();
    c.record("finite-entries", None, finite);
    if !finite_ok {
        return c;
    }

    let (n, k) = p.x.shape();
    let dims = if n == 0 || k == 0 {
        Err(Error::invalid("X", "design matrix is empty"))
    } else {
        linalg::ensure_shape(&p.omega, n, n, "Omega")
    };
    let dims_ok = dims.is_ok();
    c.record("dimensions", None, dims);
    if !dims_ok {
        return c;
    }

    c.record(
        "n-exceeds-k",
        None,
        if n > k {
            Ok(())
        } else {
            Err(Error::invalid("X", format!("needs n > k, got n = {n}, k = {k}")))
        },
    );

    let sv = linalg::singular_values(&p.x);
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let rank = sv.iter().filter(|&&s| s > tol.rank_rel_tol * smax).count();
    c.record(
        "rank-x",
        Some(if smax > 0.0 { smin / smax } else { 0.0 }),
        if rank == k {
            Ok(())
        } else {
            Err(Error::RankDeficient {
                what: "X".into(),
                expected: k,
                found: rank,
            })
        },
    );

    let asym = linalg::asymmetry(&p.omega);
    c.record(
        "omega-symmetric",
        Some(asym),
        if asym <= tol.equality_rel_tol {
            Ok(())
        } else {
            Err(Error::NotSymmetric {
                what: "Omega".into(),
                asymmetry: asym,
            })
        },
    );
    let ev = linalg::sym_eigenvalues(&p.omega);
    let maxabs = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let ratio = if maxabs > 0.0 { ev[0] / maxabs } else { 0.0 };
    c.record(
        "omega-spd",
        Some(ratio),
        if asym <= tol.equality_rel_tol && ratio > tol.psd_eig_tol {
            Ok(())
        } else {
            Err(Error::NotSpd { what: "Omega".into() })
        },
    );

    if let Some(z) = &p.z {
        let m = n.saturating_sub(k);
        let shape = linalg::ensure_shape(z, n, m, "Z");
        let shape_ok = shape.is_ok();
        c.record("z-shape", None, shape);
        if shape_ok && m > 0 {
            let scale = linalg::fro(&p.x) * linalg::fro(z);
            let res = if scale > 0.0 {
                linalg::fro(&(p.x.transpose() * z)) / scale
            } else {
                0.0
            };
            c.record(
                "z-annihilates-x",
                Some(res),
                if res <= tol.equality_rel_tol {
                    Ok(())
                } else {
                    Err(Error::invalid("Z", format!("X^T Z is not zero (relative {res:.3e})")))
                },
            );
            let zr = linalg::numeric_rank(z, tol).unwrap_or(0);
            c.record(
                "rank-z",
                None,
                if zr == m {
                    Ok(())
                } else {
                    Err(Error::RankDeficient {
                        what: "Z".into(),
                        expected: m,
                        found: zr,
                    })
                },
            );
        }
    }

    if let Some(s2) = p.sigma2 {
        c.record(
            "sigma2-nonnegative",
            Some(s2),
            if s2.is_finite() && s2 >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid("sigma2", format!("must be finite and >= 0, got {s2}")))
            },
        );
    }
    c
}

/// Check every design invariant and report each one. Never fails.
pub fn validate_design(p: &DesignParts, tol: &ToleranceConfig) -> ValidationReport {
    let c = run_checks(p, tol);
    ValidationReport {
        valid: c.first_error.is_none(),
        checks: c.checks,
    }
}

/// A validated instance of `y = Xβ + ε`, `Cov(ε) = σ²Ω`.
///
/// The annihilator basis `z` is always the canonical orthonormal complement
/// of `C(X)`. A user-supplied annihilator is kept in `supplied_z`.
#[derive(Debug, Clone)]
pub struct GeneralLinearDesign {
    x: RealMatrix,
    omega: RealMatrix,
    z: RealMatrix,
    supplied_z: Option<RealMatrix>,
    sigma2: Option<f64>,
}

impl GeneralLinearDesign {
    pub fn new(x: RealMatrix, omega: RealMatrix, tol: &ToleranceConfig) -> Result<Self> {
        DesignParts::new(x, omega).build(tol)
    }

    pub fn from_parts(p: DesignParts, tol: &ToleranceConfig) -> Result<Self> {
        tol.validate()?;
        if let Some(e) = run_checks(&p, tol).first_error {
            return Err(e);
        }
        let z = linalg::orthogonal_complement_basis(&p.x, tol)?;
        let omega = (&p.omega + p.omega.transpose()) * 0.5;
        Ok(Self {
            x: p.x,
            omega,
            z,
            supplied_z: p.z,
            sigma2: p.sigma2,
        })
    }

    /// Same design with a different error covariance.
    pub fn with_omega(&self, omega: RealMatrix, tol: &ToleranceConfig) -> Result<Self> {
        let mut parts = self.parts();
        parts.omega = omega;
        parts.build(tol)
    }

    pub fn with_sigma2(mut self, sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::invalid("sigma2", format!("must be finite and >= 0, got {sigma2}")));
        }
        self.sigma2 = Some(sigma2);
        Ok(self)
    }

    pub fn parts(&self) -> DesignParts {
        DesignParts {
            x: self.x.clone(),
            omega: self.omega.clone(),
            z: self.supplied_z.clone(),
            sigma2: self.sigma2,
        }
    }

    pub fn validate(&self, tol: &ToleranceConfig) -> ValidationReport {
        validate_design(&self.parts(), tol)
    }

    pub fn x(&self) -> &RealMatrix {
        &self.x
    }
    pub fn omega(&self) -> &RealMatrix {
        &self.omega
    }
    pub fn z(&self) -> &RealMatrix {
        &self.z
    }
    pub fn supplied_z(&self) -> Option<&RealMatrix> {
        self.supplied_z.as_ref()
    }
    pub fn sigma2(&self) -> Option<f64> {
        self.sigma2
    }
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
    pub fn k(&self) -> usize {
        self.x.ncols()
    }
    pub fn identity_n(&self) -> RealMatrix {
        RealMatrix::identity(self.n(), self.n())
    }

    pub fn xtx(&self) -> RealMatrix {
        self.x.transpose() * &self.x
    }

    pub fn xtx_inv(&self, tol: &ToleranceConfig) -> Result<RealMatrix> {
        linalg::spd_inverse(&self.xtx(), "X^T X", tol)
    }

    pub fn omega_inv(&self, tol: &ToleranceConfig) -> Result<RealMatrix> {
        linalg::spd_inverse(&self.omega, "Omega", tol)
    }

    /// `X (XᵀX)⁻¹ Xᵀ`.
    pub fn projector_x(&self, tol: &ToleranceConfig) -> Result<RealMatrix> {
        let p = &self.x * self.xtx_inv(tol)? * self.x.transpose();
        Ok((&p + p.transpose()) * 0.5)
    }

    /// `y = Xβ + σ Ω^{1/2} u`, `u ~ N(0, I)` from a ChaCha stream seeded by `seed`.
    pub fn sample_observation(&self, beta: &RealVector, seed: u64) -> Result<RealVector> {
        let sampler = ObservationSampler::new(self)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sampler.draw(beta, &mut rng)
    }
}

/// Reusable sampler holding the noise factor `σ Ω^{1/2}`.
#[derive(Debug, Clone)]
pub struct ObservationSampler {
    x: RealMatrix,
    factor: RealMatrix,
}

impl ObservationSampler {
    pub fn new(d: &GeneralLinearDesign) -> Result<Self> {
        let s2 = d
            .sigma2
            .ok_or_else(|| Error::invalid("sigma2", "required for sampling"))?;
        let factor = if s2 == 0.0 {
            RealMatrix::zeros(d.n(), d.n())
        } else {
            linalg::sqrt_spd(&d.omega, &ToleranceConfig::default())? * s2.sqrt()
        };
        Ok(Self { x: d.x.clone(), factor })
    }

    pub fn draw(&self, beta: &RealVector, rng: &mut impl rand::Rng) -> Result<RealVector> {
        if beta.len() != self.x.ncols() {
            return Err(Error::dims("beta", self.x.ncols(), beta.len()));
        }
        let n = self.x.nrows();
        let u = RealVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
        Ok(&self.x * beta + &self.factor * u)
    }
}

/// First two prior moments: `γ = E[σ²]` and `W = E[ββᵀ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMoments {
    gamma: f64,
    w: RealMatrix,
}

impl PriorMoments {
    pub fn new(gamma: f64, w: RealMatrix, tol: &ToleranceConfig) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid("gamma", format!("must be finite and > 0, got {gamma}")));
        }
        let w = linalg::require_psd(&w, "W", tol)?;
        Ok(Self { gamma, w })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn w(&self) -> &RealMatrix {
        &self.w
    }

    /// `W* = W / γ`.
    pub fn w_star(&self) -> RealMatrix {
        &self.w / self.gamma
    }
}
