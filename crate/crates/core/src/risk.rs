//! Bayes risk of linear maps under a prior known through `(γ, W)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorFamily, LinearEstimatorMap};
use crate::linalg::{self, RealMatrix, RealVector};
use crate::model::{GeneralLinearDesign, PriorMoments};
use crate::tolerance::ToleranceConfig;

pub const MIN_DRAWS: usize = 1000;
const BLOCK: usize = 4096;

/// `(X, Ω)` without the `n > k` requirement of a full design.
#[derive(Debug, Clone)]
pub struct RiskModel {
    x: RealMatrix,
    omega: RealMatrix,
}

impl RiskModel {
    pub fn new(x: RealMatrix, omega: RealMatrix, tol: &ToleranceConfig) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || x.ncols() == 0 {
            return Err(Error::invalid("X", "design matrix is empty"));
        }
        linalg::ensure_finite(&x, "X")?;
        linalg::ensure_shape(&omega, n, n, "Omega")?;
        let omega = linalg::require_spd(&omega, "Omega", tol)?;
        Ok(Self { x, omega })
    }

    pub fn x(&self) -> &RealMatrix {
        &self.x
    }

    pub fn omega(&self) -> &RealMatrix {
        &self.omega
    }
}

impl From<&GeneralLinearDesign> for RiskModel {
    fn from(d: &GeneralLinearDesign) -> Self {
        Self {
            x: d.x().clone(),
            omega: d.omega().clone(),
        }
    }
}

fn check_dims(l: &RealMatrix, m: &RiskModel, prior: &PriorMoments) -> Result<()> {
    let (n, k) = m.x.shape();
    linalg::ensure_shape(l, k, n, "L")?;
    linalg::ensure_shape(prior.w(), k, k, "W")?;
    linalg::ensure_finite(l, "L")
}

/// `tr(γ LΩLᵀ + (LX − I) W (LX − I)ᵀ)`.
pub fn closed_form_risk(l: &RealMatrix, m: &RiskModel, prior: &PriorMoments) -> Result<f64> {
    check_dims(l, m, prior)?;
    let k = m.x.ncols();
    let a = l * &m.x - RealMatrix::identity(k, k);
    let noise = (l * &m.omega * l.transpose()).trace() * prior.gamma();
    let bias = (&a * prior.w() * a.transpose()).trace();
    Ok((noise + bias).max(0.0))
}

/// Derivative of the risk with respect to `L`: `2γLΩ + 2LXWXᵀ − 2WXᵀ`.
pub fn risk_gradient(l: &RealMatrix, m: &RiskModel, prior: &PriorMoments) -> Result<RealMatrix> {
    check_dims(l, m, prior)?;
    let wxt = prior.w() * m.x.transpose();
    Ok((l * &m.omega * prior.gamma() + l * &m.x * &wxt - wxt) * 2.0)
}

/// `‖γLΩ + LXWXᵀ − WXᵀ‖ / max(‖WXᵀ‖, tiny)`; zero at the optimum.
pub fn stationarity_residual(l: &RealMatrix, m: &RiskModel, prior: &PriorMoments) -> Result<f64> {
    let g = risk_gradient(l, m, prior)? * 0.5;
    let scale = linalg::fro(&(prior.w() * m.x.transpose()));
    Ok(linalg::fro(&g) / scale.max(f64::MIN_POSITIVE))
}

/// `L* = W* Xᵀ (Ω + X W* Xᵀ)⁻¹` with `W* = W/γ`.
pub fn optimal_map(m: &RiskModel, prior: &PriorMoments, tol: &ToleranceConfig) -> Result<LinearEstimatorMap> {
    let w_star = prior.w_star();
    let l = estimators::bl_kernel(&m.x, &m.omega, &w_star, tol)?;
    Ok(LinearEstimatorMap {
        l,
        family: EstimatorFamily::BayesLinear,
        phi: m.omega.clone(),
        k: w_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedEstimate {
    pub first: MonteCarloEstimate,
    pub second: MonteCarloEstimate,
    /// Mean and standard error of `loss(first) − loss(second)`.
    pub difference: MonteCarloEstimate,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }

    fn estimate(&self) -> MonteCarloEstimate {
        let var = if self.n > 1.0 { self.m2 / (self.n - 1.0) } else { 0.0 };
        MonteCarloEstimate {
            estimate: self.mean,
            standard_error: (var / self.n).sqrt(),
            draws: self.n as usize,
        }
    }
}

/// For `β = W^{1/2}u`, `ε = √γ Ω^{1/2} v`: `Ly − β = (LX − I)W^{1/2}u + √γ LΩ^{1/2} v`.
struct LossFactors {
    bias: RealMatrix,
    noise: RealMatrix,
}

fn loss_factors(l: &RealMatrix, m: &RiskModel, w_half: &RealMatrix, o_half: &RealMatrix, gamma: f64) -> LossFactors {
    let k = m.x.ncols();
    LossFactors {
        bias: (l * &m.x - RealMatrix::identity(k, k)) * w_half,
        noise: l * o_half * gamma.sqrt(),
    }
}

impl LossFactors {
    fn loss(&self, u: &RealVector, v: &RealVector, buf: &mut RealVector) -> f64 {
        buf.gemv(1.0, &self.bias, u, 0.0);
        buf.gemv(1.0, &self.noise, v, 1.0);
        buf.norm_squared()
    }
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

fn run_blocks(
    factors: &[LossFactors],
    k: usize,
    n: usize,
    draws: usize,
    seed: u64,
) -> Vec<Vec<Moments>> {
    let blocks = draws.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let count = BLOCK.min(draws - b * BLOCK);
            let mut u = RealVector::zeros(k);
            let mut v = RealVector::zeros(n);
            let mut buf = RealVector::zeros(k);
            let mut acc = vec![Moments::default(); factors.len() + 1];
            for _ in 0..count {
                for x in u.iter_mut() {
                    *x = StandardNormal.sample(&mut rng);
                }
                for x in v.iter_mut() {
                    *x = StandardNormal.sample(&mut rng);
                }
                let mut losses = [0.0_f64; 2];
                for (i, f) in factors.iter().enumerate() {
                    let loss = f.loss(&u, &v, &mut buf);
                    acc[i].push(loss);
                    if i < 2 {
                        losses[i] = loss;
                    }
                }
                if factors.len() == 2 {
                    acc[2].push(losses[0] - losses[1]);
                }
            }
            acc
        })
        .collect()
}

fn reduce(blocks: Vec<Vec<Moments>>, width: usize) -> Vec<Moments> {
    blocks.into_iter().fold(vec![Moments::default(); width], |acc, b| {
        acc.into_iter().zip(b).map(|(a, m)| a.merge(m)).collect()
    })
}

fn prepare(m: &RiskModel, prior: &PriorMoments, draws: usize, tol: &ToleranceConfig) -> Result<(RealMatrix, RealMatrix)> {
    if draws < MIN_DRAWS {
        return Err(Error::invalid("draws", format!("need at least {MIN_DRAWS}, got {draws}")));
    }
    let w_half = linalg::sqrt_psd(prior.w(), "W", tol)?;
    let o_half = linalg::sqrt_spd(&m.omega, tol)?;
    Ok((w_half, o_half))
}

/// Sample mean and standard error of `‖Ly − β‖²` with `σ² = γ` fixed and
/// `β ~ N(0, W)`. Deterministic for a given seed regardless of thread count.
pub fn monte_carlo_risk(
    l: &RealMatrix,
    m: &RiskModel,
    prior: &PriorMoments,
    draws: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<MonteCarloEstimate> {
    check_dims(l, m, prior)?;
    let (w_half, o_half) = prepare(m, prior, draws, tol)?;
    let f = loss_factors(l, m, &w_half, &o_half, prior.gamma());
    let (n, k) = m.x.shape();
    let out = reduce(run_blocks(&[f], k, n, draws, seed), 2);
    Ok(out[0].estimate())
}

/// Both maps evaluated on the same draws.
pub fn monte_carlo_risk_paired(
    first: &RealMatrix,
    second: &RealMatrix,
    m: &RiskModel,
    prior: &PriorMoments,
    draws: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<PairedEstimate> {
    check_dims(first, m, prior)?;
    check_dims(second, m, prior)?;
    let (w_half, o_half) = prepare(m, prior, draws, tol)?;
    let fs = [
        loss_factors(first, m, &w_half, &o_half, prior.gamma()),
        loss_factors(second, m, &w_half, &o_half, prior.gamma()),
    ];
    let (n, k) = m.x.shape();
    let out = reduce(run_blocks(&fs, k, n, draws, seed), 3);
    Ok(PairedEstimate {
        first: out[0].estimate(),
        second: out[1].estimate(),
        difference: out[2].estimate(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskReport {
    pub closed_form: f64,
    pub optimal: f64,
    pub monte_carlo: Option<MonteCarloEstimate>,
    /// `r(L*) / r(L)`, taken as 1 when both vanish.
    pub efficiency_vs_optimal: f64,
}

pub fn risk_report(
    l: &RealMatrix,
    m: &RiskModel,
    prior: &PriorMoments,
    monte_carlo: Option<(usize, u64)>,
    tol: &ToleranceConfig,
) -> Result<RiskReport> {
    let closed_form = closed_form_risk(l, m, prior)?;
    let optimal = closed_form_risk(&optimal_map(m, prior, tol)?.l, m, prior)?;
    let efficiency_vs_optimal = if closed_form == 0.0 {
        1.0
    } else {
        optimal / closed_form
    };
    let monte_carlo = match monte_carlo {
        Some((draws, seed)) => Some(monte_carlo_risk(l, m, prior, draws, seed, tol)?),
        None => None,
    };
    Ok(RiskReport {
        closed_form,
        optimal,
        monte_carlo,
        efficiency_vs_optimal,
    })
}
