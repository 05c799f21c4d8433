//! Decision procedures for estimator equality between the Bayes linear
//! families over Ω and over the identity.
//!
//! Throughout, `L₁ = β̂_BL(Ω, K₁)`, `L₂ = β̂_BL(I, K₂)`, `B = XᵀX` and
//! `(Γ, Ξ, Δ)` is the canonical decomposition of Ω. Every analytic verdict
//! is re-checked on probe vectors; a disagreement between the two is an
//! error, since it means a tolerance is miscalibrated for the instance.

use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::covariance::{self, CovarianceDecomposition, GRAY_ZONE};
use crate::error::{Error, Result};
use crate::estimators;
use crate::linalg::{self, RealMatrix, RealVector};
use crate::model::GeneralLinearDesign;
use crate::tolerance::ToleranceConfig;

pub const ESTIMATOR_EQUALITY: &str = "estimator-equality";
pub const CLASS_EQUIVALENCE: &str = "class-equivalence";
pub const POINTWISE_MEMBERSHIP: &str = "pointwise-membership";
pub const RSS_EQUALITY: &str = "rss-equality";
pub const JOINT_EQUALITY: &str = "joint-equality";

/// Probe configuration for the empirical side of every check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WitnessSearch {
    pub draws: usize,
    pub seed: u64,
}

impl Default for WitnessSearch {
    fn default() -> Self {
        Self { draws: 100, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub y: Vec<f64>,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub verdict: bool,
    pub theorem: &'static str,
    pub condition_residuals: BTreeMap<String, f64>,
    pub witnesses: Vec<Witness>,
    /// Largest gap observed over all probe vectors.
    pub max_gap: f64,
    pub notes: Vec<String>,
}

impl EquivalenceReport {
    fn new(theorem: &'static str) -> Self {
        Self {
            verdict: false,
            theorem,
            condition_residuals: BTreeMap::new(),
            witnesses: Vec::new(),
            max_gap: 0.0,
            notes: Vec::new(),
        }
    }

    fn residual(&mut self, label: &str, value: f64) {
        self.condition_residuals.insert(label.to_string(), value);
    }
}

/// Standard-normal draws followed by `±eᵢ`, an orthonormal basis of `C(X)`
/// and the canonical basis of its complement.
pub fn probe_vectors(d: &GeneralLinearDesign, search: &WitnessSearch, tol: &ToleranceConfig) -> Result<Vec<RealVector>> {
    let n = d.n();
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let mut out = Vec::with_capacity(search.draws + 3 * n);
    for _ in 0..search.draws {
        out.push(RealVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng))));
    }
    for i in 0..n {
        let e = RealVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 });
        out.push(-&e);
        out.push(e);
    }
    for c in linalg::column_basis(d.x(), tol)?.column_iter() {
        out.push(c.into_owned());
    }
    for c in d.z().column_iter() {
        out.push(c.into_owned());
    }
    Ok(out)
}

fn check_k(k: &RealMatrix, d: &GeneralLinearDesign, what: &str, tol: &ToleranceConfig) -> Result<RealMatrix> {
    linalg::ensure_shape(k, d.k(), d.k(), what)?;
    linalg::require_psd(k, what, tol)
}

fn rel(num: f64, scales: &[f64]) -> f64 {
    num / scales.iter().cloned().fold(1.0_f64, f64::max)
}

fn cond_sq(x: &RealMatrix) -> f64 {
    linalg::condition_number(x).powi(2)
}

fn gap_over(diff: &RealMatrix, probes: &[RealVector]) -> (f64, usize) {
    let mut best = (0.0_f64, 0);
    for (i, y) in probes.iter().enumerate() {
        let g = (diff * y).norm() / 1.0_f64.max(y.norm());
        if g > best.0 {
            best = (g, i);
        }
    }
    best
}

/// `β̂_BL(Ω, K₁) y = β̂_BL(I, K₂) y` for every `y`, decided by `ΩXK₂ = XK₁`.
pub fn equality_all_y(
    d: &GeneralLinearDesign,
    k1: &RealMatrix,
    k2: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<EquivalenceReport> {
    equality_all_y_with(d, k1, k2, tol, &WitnessSearch::default())
}

pub fn equality_all_y_with(
    d: &GeneralLinearDesign,
    k1: &RealMatrix,
    k2: &RealMatrix,
    tol: &ToleranceConfig,
    search: &WitnessSearch,
) -> Result<EquivalenceReport> {
    let k1 = check_k(k1, d, "K1", tol)?;
    let k2 = check_k(k2, d, "K2", tol)?;
    let eps = tol.equality_rel_tol;
    let x = d.x();
    let b = d.xtx();
    let mut rep = EquivalenceReport::new(ESTIMATOR_EQUALITY);

    let lhs = d.omega() * x * &k2;
    let rhs = x * &k1;
    let r0 = rel(linalg::fro(&(&lhs - &rhs)), &[linalg::fro(&lhs), linalg::fro(&rhs)]);
    rep.residual("OmegaXK2-XK1", r0);

    let dec = covariance::decompose(d, tol)?;
    let kbg = &k2 * &b * &dec.gamma;
    let scale = [linalg::fro(&kbg), linalg::fro(&k1)];
    let r_gamma = rel(linalg::fro(&(&kbg - &k1)), &scale);
    let r_xi = rel(linalg::fro(&(&k2 * &b * &dec.xi)), &scale);
    rep.residual("K2XtXGamma-K1", r_gamma);
    rep.residual("K2XtXXi", r_xi);

    rep.verdict = r0 <= eps;
    let pair_ok = r_gamma.max(r_xi) <= eps;
    let band = GRAY_ZONE * cond_sq(x) * eps;
    if pair_ok != rep.verdict && r0.max(r_gamma).max(r_xi) > band {
        return Err(Error::InternalConsistency(format!(
            "estimator equality conditions disagree: primary {r0:.3e}, Gamma-form {r_gamma:.3e}, Xi-form {r_xi:.3e}"
        )));
    }

    let l1 = estimators::bayes_linear_map(d, d.omega(), &k1, tol)?.l;
    let l2 = estimators::bayes_linear_map(d, &d.identity_n(), &k2, tol)?.l;
    let diff = &l1 - &l2;
    rep.residual("fitted-values", linalg::rel_diff(&(x * &l1), &(x * &l2)));

    let probes = probe_vectors(d, search, tol)?;
    let (gap, at) = gap_over(&diff, &probes);
    rep.max_gap = gap;
    let map_scale = 1.0_f64.max(linalg::fro(&l1)).max(linalg::fro(&l2));
    if rep.verdict {
        if gap > GRAY_ZONE * eps * map_scale {
            return Err(Error::InternalConsistency(format!(
                "conditions hold but probes show an estimator gap of {gap:.3e}"
            )));
        }
    } else {
        let round_off = 1e3 * f64::EPSILON * map_scale;
        if r0 > band && gap <= round_off {
            return Err(Error::InternalConsistency(format!(
                "conditions fail ({r0:.3e}) but no probe separates the estimators"
            )));
        }
        rep.witnesses.push(Witness {
            y: probes[at].iter().cloned().collect(),
            gap,
        });
    }
    Ok(rep)
}

/// Eigenbasis of `C = B^{1/2} Γ B^{1/2}`. Regularizers of the form
/// `B^{-1/2} V diag(p) Vᵀ B^{-1/2}` have symmetric companions.
#[derive(Debug, Clone)]
pub struct CommutingFamily {
    b_inv_sqrt: RealMatrix,
    v: RealMatrix,
    lambda: RealVector,
}

impl CommutingFamily {
    pub fn new(d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<Self> {
        let dec = covariance::decompose(d, tol)?;
        Self::from_gamma(&d.xtx(), &dec.gamma, tol)
    }

    pub fn from_gamma(b: &RealMatrix, gamma: &RealMatrix, tol: &ToleranceConfig) -> Result<Self> {
        let b_sqrt = linalg::sqrt_spd(b, tol)?;
        let b_inv_sqrt = linalg::inverse_sqrt_spd(b, tol)?;
        let c = &b_sqrt * gamma * &b_sqrt;
        let eig = SymmetricEigen::new((&c + c.transpose()) * 0.5);
        Ok(Self {
            b_inv_sqrt,
            v: eig.eigenvectors,
            lambda: eig.eigenvalues,
        })
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// `B^{-1/2} V diag(p) Vᵀ B^{-1/2}`.
    pub fn regularizer(&self, p: &[f64]) -> RealMatrix {
        let d = RealVector::from_column_slice(p);
        let m = &self.b_inv_sqrt * &self.v * RealMatrix::from_diagonal(&d) * self.v.transpose() * &self.b_inv_sqrt;
        (&m + m.transpose()) * 0.5
    }

    /// The companion `K₂BΓ` of `regularizer(p)`, i.e. `regularizer(p ⊙ λ)`.
    pub fn companion(&self, p: &[f64]) -> RealMatrix {
        let q: Vec<f64> = p.iter().zip(self.lambda.iter()).map(|(a, l)| a * l).collect();
        self.regularizer(&q)
    }

    /// The `K₂` paired with `K₁ = regularizer(q)`, i.e. `regularizer(q ⊘ λ)`.
    pub fn inverse_companion(&self, q: &[f64]) -> RealMatrix {
        let p: Vec<f64> = q.iter().zip(self.lambda.iter()).map(|(a, l)| a / l).collect();
        self.regularizer(&p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompanionOutcome {
    Constructed { k: RealMatrix, notes: Vec<String> },
    Failed { reason: String, asymmetry: f64, min_eigenvalue: f64 },
}

impl CompanionOutcome {
    pub fn matrix(&self) -> Option<&RealMatrix> {
        match self {
            CompanionOutcome::Constructed { k, .. } => Some(k),
            CompanionOutcome::Failed { .. } => None,
        }
    }
}

fn validate_companion(candidate: RealMatrix, tol: &ToleranceConfig) -> CompanionOutcome {
    let asym = linalg::asymmetry(&candidate);
    let sym = (&candidate + candidate.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let maxabs = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if asym > tol.equality_rel_tol {
        return CompanionOutcome::Failed {
            reason: format!("companion is not symmetric (relative asymmetry {asym:.3e})"),
            asymmetry: asym,
            min_eigenvalue: min,
        };
    }
    let floor = -tol.psd_eig_tol * maxabs;
    if min < floor {
        return CompanionOutcome::Failed {
            reason: format!("companion has eigenvalue {min:.3e} below {floor:.3e}"),
            asymmetry: asym,
            min_eigenvalue: min,
        };
    }
    let mut notes = Vec::new();
    let k = if min < 0.0 {
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        notes.push(format!("clipped negative eigenvalue {min:.3e} to zero"));
        &eig.eigenvectors * RealMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
    } else {
        sym
    };
    CompanionOutcome::Constructed { k, notes }
}

fn require_rao(d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<CovarianceDecomposition> {
    if !covariance::has_rao_structure(d, tol)? {
        return Err(Error::Precondition("companion regularizers need Rao's covariance structure".into()));
    }
    covariance::decompose(d, tol)
}

/// `K₁ = K₂ XᵀX Γ`, so that `β̂_BL(I, K₂) = β̂_BL(Ω, K₁)` for every `y`.
pub fn companion_regularizer(d: &GeneralLinearDesign, k2: &RealMatrix, tol: &ToleranceConfig) -> Result<CompanionOutcome> {
    let k2 = check_k(k2, d, "K2", tol)?;
    let dec = require_rao(d, tol)?;
    let out = validate_companion(&k2 * d.xtx() * &dec.gamma, tol);
    if let CompanionOutcome::Constructed { k, .. } = &out {
        let rep = equality_all_y(d, k, &k2, tol)?;
        if !rep.verdict {
            return Err(Error::InternalConsistency(format!(
                "constructed companion fails estimator equality (residual {:.3e})",
                rep.condition_residuals["OmegaXK2-XK1"]
            )));
        }
    }
    Ok(out)
}

/// `K₂ = K₁ (XᵀXΓ)⁻¹`, the reverse pairing.
pub fn inverse_companion_regularizer(
    d: &GeneralLinearDesign,
    k1: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<CompanionOutcome> {
    let k1 = check_k(k1, d, "K1", tol)?;
    let dec = require_rao(d, tol)?;
    let bg = d.xtx() * &dec.gamma;
    let candidate = linalg::lu_solve(&bg.transpose(), &k1.transpose(), "X^T X Gamma")?.transpose();
    let out = validate_companion(candidate, tol);
    if let CompanionOutcome::Constructed { k, .. } = &out {
        let rep = equality_all_y(d, &k1, k, tol)?;
        if !rep.verdict {
            return Err(Error::InternalConsistency(format!(
                "reverse companion fails estimator equality (residual {:.3e})",
                rep.condition_residuals["OmegaXK2-XK1"]
            )));
        }
    }
    Ok(out)
}

/// `K Xᵀ (Φ + X K Xᵀ)⁻¹` for a possibly non-symmetric `K`.
fn bl_general(x: &RealMatrix, phi: &RealMatrix, k: &RealMatrix) -> Option<RealMatrix> {
    let a = phi + x * k * x.transpose();
    let a_t_inv_x_kt = a.transpose().lu().solve(&(x * k.transpose()))?;
    Some(a_t_inv_x_kt.transpose())
}

/// Whether the two Bayes linear classes over Ω and over `I` coincide.
/// The verdict is Rao's structure; when it holds, both inclusion
/// directions are spot-checked.
pub fn class_equivalence(d: &GeneralLinearDesign, tol: &ToleranceConfig) -> Result<EquivalenceReport> {
    class_equivalence_with(d, tol, &WitnessSearch { draws: 10, ..Default::default() })
}

pub fn class_equivalence_with(
    d: &GeneralLinearDesign,
    tol: &ToleranceConfig,
    search: &WitnessSearch,
) -> Result<EquivalenceReport> {
    let mut rep = EquivalenceReport::new(CLASS_EQUIVALENCE);
    let r = covariance::rao_residuals(d, tol)?;
    rep.residual("XtOmegaZ", r.omega);
    rep.residual("XtOmegaInvZ", r.omega_inv);
    rep.verdict = covariance::has_rao_structure(d, tol)?;
    if !rep.verdict {
        let dec = covariance::decompose(d, tol)?;
        rep.residual("Xi", linalg::fro(&dec.xi));
        return Ok(rep);
    }

    let fam = CommutingFamily::new(d, tol)?;
    let dec = covariance::decompose(d, tol)?;
    let bg = d.xtx() * &dec.gamma;
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let k = d.k();
    let mut worst_fwd = 0.0_f64;
    let mut worst_rev = 0.0_f64;
    let mut worst_generic = 0.0_f64;
    for _ in 0..search.draws {
        let p: Vec<f64> = (0..k).map(|_| rand::Rng::random_range(&mut rng, 0.1..3.0)).collect();
        let k2 = fam.regularizer(&p);
        match companion_regularizer(d, &k2, tol)? {
            CompanionOutcome::Constructed { k: k1, .. } => {
                worst_fwd = worst_fwd.max(linalg::rel_diff(&k1, &fam.companion(&p)));
            }
            CompanionOutcome::Failed { reason, .. } => {
                return Err(Error::InternalConsistency(format!("forward spot check failed: {reason}")));
            }
        }
        let k1 = fam.regularizer(&p);
        match inverse_companion_regularizer(d, &k1, tol)? {
            CompanionOutcome::Constructed { k: k2, .. } => {
                worst_rev = worst_rev.max(linalg::rel_diff(&k2, &fam.inverse_companion(&p)));
            }
            CompanionOutcome::Failed { reason, .. } => {
                return Err(Error::InternalConsistency(format!("reverse spot check failed: {reason}")));
            }
        }

        // Generic symmetric K₂: the companion K₂BΓ need not be symmetric, but
        // the map identity still holds algebraically.
        let g = RealMatrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut rng));
        let k2 = &g * g.transpose() / k as f64;
        let k1 = &k2 * &bg;
        if let Some(l1) = bl_general(d.x(), d.omega(), &k1) {
            let l2 = estimators::bayes_linear_map(d, &d.identity_n(), &k2, tol)?.l;
            worst_generic = worst_generic.max(linalg::rel_diff(&l1, &l2));
        }
    }
    rep.residual("forward-spot-check", worst_fwd);
    rep.residual("reverse-spot-check", worst_rev);
    rep.residual("generic-companion-map", worst_generic);
    let bound = GRAY_ZONE * tol.equality_rel_tol;
    if worst_fwd.max(worst_rev).max(worst_generic) > bound {
        return Err(Error::InternalConsistency(format!(
            "class spot checks off: forward {worst_fwd:.3e}, reverse {worst_rev:.3e}, generic {worst_generic:.3e}"
        )));
    }
    rep.max_gap = worst_fwd.max(worst_rev).max(worst_generic);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipReport {
    pub member: bool,
    /// `‖N y‖ / max(1, ‖y‖)` with `N = (K₂XᵀΩ − K₁Xᵀ)(Ω + XK₁Xᵀ)⁻¹`.
    pub null_space_residual: f64,
    /// `‖(L₁ − L₂) y‖ / max(1, ‖y‖)`.
    pub difference_residual: f64,
    /// `‖N P_X y‖ / max(1, ‖y‖)`, only under Rao structure with PD regularizers.
    pub direct_sum_residual: Option<f64>,
}

/// Operators shared by repeated membership queries on one instance.
#[derive(Debug, Clone)]
pub struct MembershipOperator {
    n_op: RealMatrix,
    diff: RealMatrix,
    p_x: Option<RealMatrix>,
    band: f64,
}

impl MembershipOperator {
    pub fn new(d: &GeneralLinearDesign, k1: &RealMatrix, k2: &RealMatrix, tol: &ToleranceConfig) -> Result<Self> {
        let k1 = check_k(k1, d, "K1", tol)?;
        let k2 = check_k(k2, d, "K2", tol)?;
        let x = d.x();
        let om = d.omega();
        let a = om + x * &k1 * x.transpose();
        let chol = linalg::cholesky(&a, "Omega + X K1 X^T")?;
        let m = &k2 * x.transpose() * om - &k1 * x.transpose();
        // N = M A⁻¹ = (A⁻¹ Mᵀ)ᵀ since A is symmetric.
        let n_op = chol.solve(&m.transpose()).transpose();

        let l1 = estimators::bayes_linear_map(d, om, &k1, tol)?.l;
        let l2 = estimators::bayes_linear_map(d, &d.identity_n(), &k2, tol)?.l;
        let diff = l1 - l2;

        let direct_sum = linalg::is_spd(&k1, tol)?
            && linalg::is_spd(&k2, tol)?
            && covariance::has_rao_structure(d, tol)?;
        let p_x = if direct_sum { Some(d.projector_x(tol)?) } else { None };

        // (I + K₂B)(L₁ − L₂) = −N bounds the ratio of the two residuals.
        let ikb = RealMatrix::identity(d.k(), d.k()) + &k2 * d.xtx();
        let f = linalg::svd(&ikb);
        let (smax, smin) = (f.smax(), f.smin());
        let band = GRAY_ZONE * tol.equality_rel_tol * (smax / smin).max(smax).max(1.0 / smin);
        Ok(Self { n_op, diff, p_x, band })
    }

    pub fn query(&self, y: &RealVector, tol: &ToleranceConfig) -> Result<MembershipReport> {
        if y.len() != self.n_op.ncols() {
            return Err(Error::dims("y", self.n_op.ncols(), y.len()));
        }
        linalg::ensure_finite(&RealMatrix::from_column_slice(y.len(), 1, y.as_slice()), "y")?;
        let scale = 1.0_f64.max(y.norm());
        let eps = tol.equality_rel_tol;
        let r_null = (&self.n_op * y).norm() / scale;
        let r_diff = (&self.diff * y).norm() / scale;
        let r_sum = self.p_x.as_ref().map(|p| (&self.n_op * (p * y)).norm() / scale);

        let member = r_null <= eps;
        let straddles = |r: f64| (r <= eps) != member && r.max(r_null) > self.band;
        if straddles(r_diff) || r_sum.is_some_and(straddles) {
            return Err(Error::InternalConsistency(format!(
                "membership routes disagree: null-space {r_null:.3e}, difference {r_diff:.3e}, direct-sum {r_sum:?}"
            )));
        }
        Ok(MembershipReport {
            member,
            null_space_residual: r_null,
            difference_residual: r_diff,
            direct_sum_residual: r_sum,
        })
    }
}

/// Whether the two estimators agree at this particular `y`.
pub fn pointwise_membership(
    d: &GeneralLinearDesign,
    k1: &RealMatrix,
    k2: &RealMatrix,
    y: &RealVector,
    tol: &ToleranceConfig,
) -> Result<bool> {
    Ok(pointwise_membership_report(d, k1, k2, y, tol)?.member)
}

pub fn pointwise_membership_report(
    d: &GeneralLinearDesign,
    k1: &RealMatrix,
    k2: &RealMatrix,
    y: &RealVector,
    tol: &ToleranceConfig,
) -> Result<MembershipReport> {
    MembershipOperator::new(d, k1, k2, tol)?.query(y, tol)
}

/// `RSS_BL(Ω, K₁) = RSS_BL(I, K₂)` for every `y`.
pub fn rss_equality_all_y(
    d: &GeneralLinearDesign,
    k1: &RealMatrix,
    k2: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<EquivalenceReport> {
    rss_equality_all_y_with(d, k1, k2, tol, &WitnessSearch::default())
}

pub fn rss_equality_all_y_with(
    d: &GeneralLinearDesign,
    k1: &RealMatrix,
    k2: &RealMatrix,
    tol: &ToleranceConfig,
    search: &WitnessSearch,
) -> Result<EquivalenceReport> {
    let k1 = check_k(k1, d, "K1", tol)?;
    let k2 = check_k(k2, d, "K2", tol)?;
    let eps = tol.equality_rel_tol;
    let x = d.x();
    let om = d.omega();
    let n = d.n();
    let mut rep = EquivalenceReport::new(RSS_EQUALITY);

    let dec = covariance::decompose(d, tol)?;
    let m = n - d.k();
    let unit_delta = linalg::fro(&(&dec.delta - RealMatrix::identity(m, m)));
    let r15 = rel(linalg::fro(&dec.xi).hypot(unit_delta), &[linalg::fro(&dec.delta)]);
    rep.residual("rao-unit-delta", r15);

    let b = d.xtx();
    let b_inv = d.xtx_inv(tol)?;
    let g_inv = linalg::spd_inverse(&dec.gamma, "Gamma", tol)?;
    let gk = &dec.gamma + &k1;
    let bk = &b_inv + &k2;
    let lhs = &gk * &g_inv * &gk;
    let rhs = &bk * &b * &bk;
    let r16 = linalg::rel_diff(&lhs, &rhs);
    rep.residual("quadratic-gamma", r16);

    if linalg::rel_diff(&k1, &k2) <= eps {
        let kk = (&k1 + &k2) * 0.5;
        let single_l = &kk * (&g_inv - &b) * &kk;
        let single_r = &b_inv - &dec.gamma;
        let rs = linalg::rel_diff(&single_l, &single_r);
        rep.residual("single-k", rs);
        if (rs <= eps) != (r16 <= eps) && rs.max(r16) > GRAY_ZONE * eps {
            return Err(Error::InternalConsistency(format!(
                "single-regularizer condition {rs:.3e} disagrees with the paired condition {r16:.3e}"
            )));
        }
    }
    rep.verdict = r15 <= eps && r16 <= eps;

    // Direct oracle: the two quadratic forms S Ω S and T T.
    let s = linalg::spd_inverse(&(om + x * &k1 * x.transpose()), "Omega + X K1 X^T", tol)?;
    let t = linalg::spd_inverse(
        &(RealMatrix::identity(n, n) + x * &k2 * x.transpose()),
        "I + X K2 X^T",
        tol,
    )?;
    let q1 = &s * om * &s;
    let q2 = &t * &t;
    let r_direct = linalg::fro(&(&q1 - &q2)) / linalg::fro(&q1).max(linalg::fro(&q2)).max(f64::MIN_POSITIVE);
    rep.residual("quadratic-forms", r_direct);
    let band = GRAY_ZONE * cond_sq(x) * eps;
    if (r_direct <= eps) != rep.verdict && r_direct.max(r15).max(r16) > band {
        return Err(Error::InternalConsistency(format!(
            "RSS conditions ({r15:.3e}, {r16:.3e}) disagree with the quadratic forms ({r_direct:.3e})"
        )));
    }

    let probes = probe_vectors(d, search, tol)?;
    let mut worst = (0.0_f64, 0usize);
    for (i, y) in probes.iter().enumerate() {
        let a = y.dot(&(&q1 * y));
        let c = y.dot(&(&q2 * y));
        let g = (a - c).abs() / a.abs().max(c.abs()).max(f64::MIN_POSITIVE);
        if g > worst.0 {
            worst = (g, i);
        }
    }
    rep.max_gap = worst.0;
    if rep.verdict {
        if worst.0 > GRAY_ZONE * eps {
            return Err(Error::InternalConsistency(format!(
                "RSS conditions hold but probes show a relative gap of {:.3e}",
                worst.0
            )));
        }
    } else {
        if r_direct > band && worst.0 <= 1e3 * f64::EPSILON {
            return Err(Error::InternalConsistency(
                "RSS conditions fail but no probe separates the residual sums".into(),
            ));
        }
        rep.witnesses.push(Witness {
            y: probes[worst.1].iter().cloned().collect(),
            gap: worst.0,
        });
    }
    Ok(rep)
}

/// Estimator equality and RSS equality at once. This holds only for
/// `Ω = I` with `K₁ = K₂`, which is asserted whenever the verdict is true.
pub fn joint_equality(
    d: &GeneralLinearDesign,
    k1: &RealMatrix,
    k2: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<EquivalenceReport> {
    joint_equality_with(d, k1, k2, tol, &WitnessSearch::default())
}

pub fn joint_equality_with(
    d: &GeneralLinearDesign,
    k1: &RealMatrix,
    k2: &RealMatrix,
    tol: &ToleranceConfig,
    search: &WitnessSearch,
) -> Result<EquivalenceReport> {
    let est = equality_all_y_with(d, k1, k2, tol, search)?;
    let rss = rss_equality_all_y_with(d, k1, k2, tol, search)?;
    let mut rep = EquivalenceReport::new(JOINT_EQUALITY);
    for (k, v) in &est.condition_residuals {
        rep.residual(&format!("estimator/{k}"), *v);
    }
    for (k, v) in &rss.condition_residuals {
        rep.residual(&format!("rss/{k}"), *v);
    }
    let omega_gap = linalg::fro(&(d.omega() - d.identity_n()));
    let k_gap = linalg::rel_diff(k1, k2);
    rep.residual("omega-identity", omega_gap);
    rep.residual("K1-K2", k_gap);
    rep.verdict = est.verdict && rss.verdict;
    rep.max_gap = est.max_gap.max(rss.max_gap);
    rep.witnesses = est.witnesses.into_iter().chain(rss.witnesses).collect();
    if !est.verdict {
        rep.notes.push("estimators differ".into());
    }
    if !rss.verdict {
        rep.notes.push("residual sums of squares differ".into());
    }

    let eps = tol.equality_rel_tol;
    if rep.verdict && (omega_gap > 10.0 * eps || k_gap > 10.0 * eps) {
        return Err(Error::InternalConsistency(format!(
            "joint equality holds with ||Omega - I|| = {omega_gap:.3e} and ||K1 - K2|| = {k_gap:.3e}"
        )));
    }
    if !rep.verdict && omega_gap <= eps && k_gap <= eps {
        return Err(Error::InternalConsistency(
            "Omega = I and K1 = K2 but joint equality was not certified".into(),
        ));
    }
    Ok(rep)
}
