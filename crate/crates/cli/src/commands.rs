use bayeslin::equivalence::{self, EquivalenceReport, WitnessSearch};
use bayeslin::estimators::{self, LinearEstimatorMap};
use bayeslin::model::validate_design;
use bayeslin::problem::{matrix_from_rows, rows_of, ProblemFile};
use bayeslin::risk::{self, RiskModel};
use bayeslin::{covariance, sufficiency, GeneralLinearDesign, RealMatrix, RealVector};
use serde_json::json;

use crate::report::{Failure, Outcome};
use crate::{Context, Family, MapSpec, PhiChoice};

#[derive(Debug, Clone, Copy)]
pub enum Check {
    Estimator,
    Rss,
    Joint,
}

fn parse_vector(text: &str) -> Result<RealVector, Failure> {
    let v: Vec<f64> = serde_json::from_str(text).map_err(|e| Failure::new("parse", e.to_string(), Some("y")))?;
    Ok(RealVector::from_vec(v))
}

fn resolve_y(p: &ProblemFile, flag: Option<&str>) -> Result<Option<RealVector>, Failure> {
    match flag {
        Some(t) => parse_vector(t).map(Some),
        None if p.y.is_some() => Ok(Some(p.y()?)),
        None => Ok(None),
    }
}

fn require_y(p: &ProblemFile, flag: Option<&str>) -> Result<RealVector, Failure> {
    resolve_y(p, flag)?.ok_or_else(|| Failure::new("invalid-input", "needs y from --y or the problem file", Some("y")))
}

fn resolve_k(p: &ProblemFile, name: &str, k: usize) -> Result<RealMatrix, Failure> {
    match name {
        "K1" => Ok(p.k1()?),
        "K2" => Ok(p.k2()?),
        "zero" => Ok(RealMatrix::zeros(k, k)),
        "identity" => Ok(RealMatrix::identity(k, k)),
        t if t.trim_start().starts_with('[') => {
            let rows: Vec<Vec<f64>> = serde_json::from_str(t).map_err(|e| Failure::new("parse", e.to_string(), Some("k")))?;
            Ok(matrix_from_rows(&rows, "k")?)
        }
        other => Err(Failure::new(
            "invalid-input",
            format!("unknown regularizer `{other}`; use K1, K2, zero, identity or a JSON matrix"),
            Some("k"),
        )),
    }
}

fn phi_of(d: &GeneralLinearDesign, c: PhiChoice) -> RealMatrix {
    match c {
        PhiChoice::Identity => d.identity_n(),
        PhiChoice::Omega => d.omega().clone(),
    }
}

fn required(v: Option<f64>, what: &str) -> Result<f64, Failure> {
    v.ok_or_else(|| Failure::new("invalid-input", format!("this family needs --{what}"), Some(what)))
}

fn build_map(p: &ProblemFile, d: &GeneralLinearDesign, spec: &MapSpec, ctx: &Context) -> Result<LinearEstimatorMap, Failure> {
    let tol = &ctx.tol;
    let phi = phi_of(d, spec.phi);
    let map = match spec.family {
        Family::BayesLinear => estimators::bayes_linear_map(d, &phi, &resolve_k(p, &spec.k, d.k())?, tol)?,
        Family::BayesLinearAlt => estimators::bayes_linear_alt_map(d, &phi, &resolve_k(p, &spec.k, d.k())?, tol)?,
        Family::GeneralRidge => estimators::general_ridge_map(d, &phi, &resolve_k(p, &spec.k, d.k())?, tol)?,
        Family::Ols => estimators::ols_map(d, tol)?,
        Family::Gls => estimators::gls_map(d, tol)?,
        Family::Ridge => estimators::ordinary_ridge_map(d, required(spec.lambda, "lambda")?, tol)?,
        Family::Shrinkage => estimators::shrinkage_map(d, &phi, required(spec.rho, "rho")?, tol)?,
    };
    Ok(map)
}

fn design(p: &ProblemFile, a: Option<f64>, ctx: &Context) -> Result<GeneralLinearDesign, Failure> {
    Ok(p.design(a, &ctx.tol)?)
}

pub fn validate(p: &ProblemFile, a: Option<f64>, ctx: &Context) -> Result<Outcome, Failure> {
    let parts = p.design_parts(a)?;
    let rep = validate_design(&parts, &ctx.tol);
    if !rep.valid {
        let first = rep.failed().next().map(|c| c.name).unwrap_or("design");
        return Err(match parts.build(&ctx.tol) {
            Err(e) => e.into(),
            Ok(_) => Failure::new("invalid-input", format!("check `{first}` failed"), Some(first)),
        });
    }
    let mut o = Outcome::default();
    for c in &rep.checks {
        if let Some(r) = c.residual {
            o.residuals.insert(c.name.to_string(), r);
        }
    }
    o.value("n", parts.x.nrows());
    o.value("k", parts.x.ncols());
    o.value("checks", &rep.checks);
    Ok(o)
}

pub fn decompose(p: &ProblemFile, a: Option<f64>, ctx: &Context) -> Result<Outcome, Failure> {
    let d = design(p, a, ctx)?;
    let dec = covariance::decompose(&d, &ctx.tol)?;
    let rr = covariance::rao_residuals(&d, &ctx.tol)?;
    let mut o = Outcome::default();
    o.residuals.insert("XtOmegaZ".into(), rr.omega);
    o.residuals.insert("XtOmegaInvZ".into(), rr.omega_inv);
    o.residuals.insert(
        "recompose".into(),
        bayeslin::linalg::rel_diff(&dec.recompose(&ctx.tol)?, d.omega()),
    );
    o.value("Gamma", rows_of(&dec.gamma));
    o.value("Xi", rows_of(&dec.xi));
    o.value("Delta", rows_of(&dec.delta));
    o.value("Z", rows_of(d.z()));
    o.value("rao_structure", covariance::has_rao_structure(&d, &ctx.tol)?);
    Ok(o)
}

pub fn estimate(p: &ProblemFile, a: Option<f64>, spec: &MapSpec, ctx: &Context) -> Result<Outcome, Failure> {
    let d = design(p, a, ctx)?;
    let map = build_map(p, &d, spec, ctx)?;
    let mut o = Outcome::default();
    if matches!(spec.family, Family::BayesLinear | Family::BayesLinearAlt) {
        let k = resolve_k(p, &spec.k, d.k())?;
        let phi = phi_of(&d, spec.phi);
        let a = estimators::bayes_linear_map(&d, &phi, &k, &ctx.tol)?.l;
        let b = estimators::bayes_linear_alt_map(&d, &phi, &k, &ctx.tol)?.l;
        o.residuals.insert("alt-form".into(), bayeslin::linalg::rel_diff(&a, &b));
    }
    o.value("family", map.family.as_str());
    o.value("map", rows_of(&map.l));
    if let Some(y) = resolve_y(p, spec.y.as_deref())? {
        let b = map.apply(&y)?;
        o.value("beta_hat", b.as_slice());
        o.value("fitted", (d.x() * &b).as_slice());
    }
    Ok(o)
}

pub fn rss(p: &ProblemFile, a: Option<f64>, spec: &MapSpec, ctx: &Context) -> Result<Outcome, Failure> {
    let d = design(p, a, ctx)?;
    let y = require_y(p, spec.y.as_deref())?;
    let map = build_map(p, &d, spec, ctx)?;
    let phi = phi_of(&d, spec.phi);
    let norm_form = estimators::rss_of_map(d.x(), &phi, &map.l, &y, &ctx.tol)?;
    let mut o = Outcome::default();
    if spec.family == Family::BayesLinear {
        let k = resolve_k(p, &spec.k, d.k())?;
        let q = estimators::generalized_rss(&d, &phi, &k, &y, &ctx.tol)?;
        o.residuals.insert("quadratic-vs-norm".into(), (q - norm_form).abs() / q.abs().max(1.0));
    }
    o.value("family", map.family.as_str());
    o.value("rss", norm_form);
    Ok(o)
}

fn equivalence_outcome(r: EquivalenceReport) -> Outcome {
    let mut o = Outcome {
        verdict: Some(r.verdict),
        theorem: Some(r.theorem),
        residuals: r.condition_residuals,
        ..Default::default()
    };
    o.value("max_gap", r.max_gap);
    o.value("witnesses", &r.witnesses);
    if !r.notes.is_empty() {
        o.value("notes", &r.notes);
    }
    o
}

pub fn check(p: &ProblemFile, a: Option<f64>, which: Check, draws: usize, ctx: &Context) -> Result<Outcome, Failure> {
    let d = design(p, a, ctx)?;
    let k1 = p.k1()?;
    let k2 = p.k2()?;
    let search = WitnessSearch { draws, seed: ctx.seed };
    let tol = &ctx.tol;
    let r = match which {
        Check::Estimator => equivalence::equality_all_y_with(&d, &k1, &k2, tol, &search)?,
        Check::Rss => equivalence::rss_equality_all_y_with(&d, &k1, &k2, tol, &search)?,
        Check::Joint => equivalence::joint_equality_with(&d, &k1, &k2, tol, &search)?,
    };
    Ok(equivalence_outcome(r))
}

pub fn membership(p: &ProblemFile, a: Option<f64>, y: Option<&str>, ctx: &Context) -> Result<Outcome, Failure> {
    let d = design(p, a, ctx)?;
    let y = require_y(p, y)?;
    let r = equivalence::pointwise_membership_report(&d, &p.k1()?, &p.k2()?, &y, &ctx.tol)?;
    let mut o = Outcome {
        verdict: Some(r.member),
        theorem: Some(equivalence::POINTWISE_MEMBERSHIP),
        ..Default::default()
    };
    o.residuals.insert("null-space".into(), r.null_space_residual);
    o.residuals.insert("difference".into(), r.difference_residual);
    if let Some(s) = r.direct_sum_residual {
        o.residuals.insert("direct-sum".into(), s);
    }
    Ok(o)
}

pub fn sufficiency(p: &ProblemFile, a: Option<f64>, spec: &MapSpec, ctx: &Context) -> Result<Outcome, Failure> {
    let d = design(p, a, ctx)?;
    let map = build_map(p, &d, spec, ctx)?;
    let v = if spec.family == Family::BayesLinear && spec.phi == PhiChoice::Omega {
        sufficiency::classify_bayes_linear(&d, &resolve_k(p, &spec.k, d.k())?, &ctx.tol)?
    } else {
        sufficiency::verdict(&map.l, &d, &ctx.tol)?
    };
    let mut o = Outcome::default();
    o.residuals.insert("sufficiency".into(), v.residual_sufficient);
    o.residuals.insert("completeness".into(), v.residual_complete);
    o.value("family", map.family.as_str());
    o.value("sufficient", v.sufficient);
    o.value("complete", v.complete);
    if v.sufficient {
        let rec = sufficiency::recover_blue_map(&map.l, &d, &ctx.tol)?;
        o.residuals.insert("blue-fx".into(), rec.residual_fx);
        o.residuals.insert("blue-fomegaz".into(), rec.residual_fomega_z);
        o.residuals.insert("blue".into(), rec.residual_blue);
        o.value("blue_recovery", rows_of(&rec.l));
    }
    Ok(o)
}

pub fn risk(p: &ProblemFile, a: Option<f64>, spec: &MapSpec, draws: Option<usize>, ctx: &Context) -> Result<Outcome, Failure> {
    let d = design(p, a, ctx)?;
    let prior = p.prior(&ctx.tol)?;
    let model = RiskModel::from(&d);
    let map = build_map(p, &d, spec, ctx)?;
    let rep = risk::risk_report(&map.l, &model, &prior, draws.map(|n| (n, ctx.seed)), &ctx.tol)?;
    let mut o = Outcome::default();
    o.residuals.insert("stationarity".into(), risk::stationarity_residual(&map.l, &model, &prior)?);
    o.value("family", map.family.as_str());
    o.value("closed_form", rep.closed_form);
    o.value("optimal", rep.optimal);
    o.value("efficiency_vs_optimal", rep.efficiency_vs_optimal);
    if let Some(mc) = rep.monte_carlo {
        o.value(
            "monte_carlo",
            json!({"estimate": mc.estimate, "standard_error": mc.standard_error, "draws": mc.draws}),
        );
    }
    Ok(o)
}
