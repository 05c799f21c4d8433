//! Problem-file schema and deterministic JSON output.
//!
//! Matrices are arrays of row arrays. Floats are written with 17 significant
//! digits so that every value round-trips exactly.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::linalg::{RealMatrix, RealVector};
use crate::model::{DesignParts, GeneralLinearDesign, PriorMoments};
use crate::tolerance::ToleranceConfig;

pub type Rows = Vec<Vec<f64>>;

/// `Ω(a) = base + a · slope`, for parameter grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineOmega {
    pub base: Rows,
    pub slope: Rows,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "X")]
    pub x: Rows,
    #[serde(rename = "Omega", default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Rows>,
    #[serde(rename = "Omega_affine", default, skip_serializing_if = "Option::is_none")]
    pub omega_affine: Option<AffineOmega>,
    #[serde(rename = "Z", default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Rows>,
    #[serde(rename = "K1", default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<Rows>,
    #[serde(rename = "K2", default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
}

pub fn matrix_from_rows(rows: &Rows, what: &str) -> Result<RealMatrix> {
    let r = rows.len();
    if r == 0 {
        return Err(Error::invalid(what, "matrix has no rows"));
    }
    let c = rows[0].len();
    if c == 0 {
        return Err(Error::invalid(what, "matrix has no columns"));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::invalid(what, format!("row {i} has {} entries, expected {c}", rows[i].len())));
    }
    Ok(RealMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn rows_of(m: &RealMatrix) -> Rows {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn required<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::invalid(what, "required field is missing"))
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid("problem", e.to_string()))
    }

    pub fn x_matrix(&self) -> Result<RealMatrix> {
        matrix_from_rows(&self.x, "X")
    }

    pub fn has_parameter(&self) -> bool {
        self.omega_affine.is_some()
    }

    /// Ω for an optional grid value `a`. A grid value needs `Omega_affine`.
    pub fn omega_at(&self, a: Option<f64>) -> Result<RealMatrix> {
        match (a, &self.omega_affine, &self.omega) {
            (Some(a), Some(aff), _) => {
                let base = matrix_from_rows(&aff.base, "Omega_affine.base")?;
                let slope = matrix_from_rows(&aff.slope, "Omega_affine.slope")?;
                if base.shape() != slope.shape() {
                    return Err(Error::dims(
                        "Omega_affine.slope",
                        format!("{}x{}", base.nrows(), base.ncols()),
                        format!("{}x{}", slope.nrows(), slope.ncols()),
                    ));
                }
                Ok(base + slope * a)
            }
            (Some(_), None, _) => Err(Error::invalid("Omega_affine", "a grid value needs Omega_affine")),
            (None, _, Some(om)) => matrix_from_rows(om, "Omega"),
            (None, Some(_), None) => Err(Error::invalid("a", "Omega_affine needs a grid value")),
            (None, None, None) => Err(Error::invalid("Omega", "required field is missing")),
        }
    }

    pub fn design_parts(&self, a: Option<f64>) -> Result<DesignParts> {
        let mut p = DesignParts::new(self.x_matrix()?, self.omega_at(a)?);
        if let Some(z) = &self.z {
            p = p.with_z(matrix_from_rows(z, "Z")?);
        }
        if let Some(s) = self.sigma2 {
            p = p.with_sigma2(s);
        }
        Ok(p)
    }

    pub fn design(&self, a: Option<f64>, tol: &ToleranceConfig) -> Result<GeneralLinearDesign> {
        self.design_parts(a)?.build(tol)
    }

    pub fn k1(&self) -> Result<RealMatrix> {
        matrix_from_rows(required(&self.k1, "K1")?, "K1")
    }

    pub fn k2(&self) -> Result<RealMatrix> {
        matrix_from_rows(required(&self.k2, "K2")?, "K2")
    }

    pub fn w(&self) -> Result<RealMatrix> {
        matrix_from_rows(required(&self.w, "W")?, "W")
    }

    pub fn y(&self) -> Result<RealVector> {
        Ok(RealVector::from_vec(required(&self.y, "y")?.clone()))
    }

    pub fn prior(&self, tol: &ToleranceConfig) -> Result<PriorMoments> {
        PriorMoments::new(*required(&self.gamma, "gamma")?, self.w()?, tol)
    }
}

/// `%.17g`, with a trailing `.0` on integral values.
pub fn format_g17(v: f64) -> String {
    if !v.is_finite() {
        return "null".into();
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{:.16e}", v);
    let (mant, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if neg { "-" } else { "" };
    if (-5..17).contains(&exp) {
        let body = if exp >= 0 {
            let split = (exp + 1) as usize;
            let (int, frac) = digits.split_at(split);
            let frac = frac.trim_end_matches('0');
            if frac.is_empty() {
                format!("{int}.0")
            } else {
                format!("{int}.{frac}")
            }
        } else {
            let zeros = "0".repeat((-exp - 1) as usize);
            format!("0.{zeros}{}", digits.trim_end_matches('0'))
        };
        format!("{sign}{body}")
    } else {
        let (lead, rest) = digits.split_at(1);
        let rest = rest.trim_end_matches('0');
        let m = if rest.is_empty() { lead.to_string() } else { format!("{lead}.{rest}") };
        format!("{sign}{m}e{exp}")
    }
}

/// Wraps a serde_json formatter and replaces its float output.
pub struct G17<F>(pub F);

macro_rules! delegate {
    ($($name:ident),*) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
                self.0.$name(w)
            }
        )*
    };
}

impl<F: Formatter> Formatter for G17<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format_g17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    delegate!(begin_array, end_array, end_array_value, begin_object, end_object, begin_object_value, end_object_value);
}

fn write_with<F: Formatter>(value: &impl Serialize, f: F) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, G17(f));
    value
        .serialize(&mut ser)
        .map_err(|e| Error::InternalConsistency(format!("serialization failed: {e}")))?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

pub fn to_json_compact(value: &impl Serialize) -> Result<String> {
    write_with(value, CompactFormatter)
}

pub fn to_json_pretty(value: &impl Serialize) -> Result<String> {
    write_with(value, PrettyFormatter::with_indent(b"  "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_format() {
        assert_eq!(format_g17(2.0 / 3.0), "0.66666666666666663");
        assert_eq!(format_g17(1.0), "1.0");
        assert_eq!(format_g17(-12.0), "-12.0");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(1e-7), "9.9999999999999995e-8");
        assert_eq!(format_g17(1e20), "1e20");
        assert_eq!(format_g17(1.5e-3), "0.0015");
        assert_eq!(format_g17(f64::NAN), "null");
    }

    #[test]
    fn g17_round_trips() {
        for v in [std::f64::consts::PI, 1.0 / 3.0, 1e-300, 123456789.123456789, -2.5e17, 5e-324] {
            let s = format_g17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn problem_parses_and_rejects_ragged() {
        let p = ProblemFile::from_json(r#"{"X": [[1,0],[0,1],[0,0]], "Omega": [[1,0,0],[0,1,0],[0,0,1]]}"#).unwrap();
        assert!(p.design(None, &ToleranceConfig::default()).is_ok());
        let p = ProblemFile::from_json(r#"{"X": [[1,0],[0]], "Omega": [[1,0],[0,1]]}"#).unwrap();
        assert!(p.x_matrix().is_err());
        assert!(ProblemFile::from_json(r#"{"X": [[1]], "Bogus": 1}"#).is_err());
    }

    #[test]
    fn affine_omega_needs_grid_value() {
        let p = ProblemFile::from_json(
            r#"{"X": [[1],[0]], "Omega_affine": {"base": [[1,0],[0,1]], "slope": [[0,0],[0,1]]}}"#,
        )
        .unwrap();
        assert!(p.omega_at(None).is_err());
        assert_eq!(p.omega_at(Some(2.0)).unwrap()[(1, 1)], 3.0);
    }

    #[test]
    fn json_output_uses_g17() {
        let s = to_json_compact(&serde_json::json!({"v": [2.0 / 3.0, 1.0]})).unwrap();
        assert_eq!(s, r#"{"v":[0.66666666666666663,1.0]}"#);
    }
}
