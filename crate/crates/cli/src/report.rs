use std::collections::BTreeMap;

use bayeslin::problem::{self, ProblemFile};
use bayeslin::{Error, Tol};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Payload of one evaluation. Grid runs collect one of these per `a`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Outcome {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem: Option<&'static str>,
    pub residuals: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, Value>,
}

impl Outcome {
    pub fn value(&mut self, key: &str, v: impl Serialize) {
        self.values.insert(key.to_string(), serde_json::to_value(v).expect("report values serialize"));
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub a: f64,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub version: &'static str,
    pub subcommand: String,
    pub tolerances: Tol,
    pub seed: u64,
    pub input_digests: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem: Option<&'static str>,
    pub residuals: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<GridPoint>,
    pub meta: Meta,
}

impl Report {
    pub fn single(o: Outcome, meta: Meta) -> Self {
        Self {
            verdict: o.verdict,
            theorem: o.theorem,
            residuals: o.residuals,
            values: o.values,
            grid: Vec::new(),
            meta,
        }
    }

    /// Verdict is the conjunction over grid points; residuals are the
    /// worst value of each label.
    pub fn grid(points: Vec<GridPoint>, meta: Meta) -> Self {
        let verdict = if points.iter().all(|p| p.outcome.verdict.is_some()) {
            Some(points.iter().all(|p| p.outcome.verdict == Some(true)))
        } else {
            None
        };
        let mut residuals = BTreeMap::new();
        for p in &points {
            for (k, v) in &p.outcome.residuals {
                let e = residuals.entry(k.clone()).or_insert(*v);
                if *v > *e || v.is_nan() {
                    *e = *v;
                }
            }
        }
        Self {
            verdict,
            theorem: points.first().and_then(|p| p.outcome.theorem),
            residuals,
            values: BTreeMap::new(),
            grid: points,
            meta,
        }
    }
}

/// A failure that maps to exit status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub kind: String,
    pub message: String,
    pub field: Option<String>,
}

impl Failure {
    pub fn new(kind: &str, message: impl Into<String>, field: Option<&str>) -> Self {
        Self {
            kind: kind.to_string(),
            message: message.into(),
            field: field.map(str::to_string),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({"error": {"kind": self.kind, "message": self.message, "field": self.field}})
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(e.kind(), e.to_string(), e.field())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_of(v: &impl Serialize) -> String {
    sha256_hex(problem::to_json_compact(v).expect("digest input serializes").as_bytes())
}

/// Content hashes of the raw file and of every matrix it carries.
pub fn input_digests(raw: &[u8], p: &ProblemFile) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    out.insert("file".to_string(), sha256_hex(raw));
    out.insert("X".to_string(), digest_of(&p.x));
    let optional: [(&str, Option<Value>); 7] = [
        ("Omega", p.omega.as_ref().map(|m| json!(m))),
        ("Omega_affine", p.omega_affine.as_ref().map(|m| json!(m))),
        ("Z", p.z.as_ref().map(|m| json!(m))),
        ("W", p.w.as_ref().map(|m| json!(m))),
        ("K1", p.k1.as_ref().map(|m| json!(m))),
        ("K2", p.k2.as_ref().map(|m| json!(m))),
        ("y", p.y.as_ref().map(|m| json!(m))),
    ];
    for (name, v) in optional {
        if let Some(v) = v {
            out.insert(name.to_string(), digest_of(&v));
        }
    }
    out
}

pub fn render(v: &impl Serialize) -> String {
    let mut s = problem::to_json_pretty(v).expect("report serializes");
    s.push('\n');
    s
}
