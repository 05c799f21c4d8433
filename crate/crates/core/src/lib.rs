//! Bayes linear and general ridge estimation for the general linear model
//! `y = Xβ + ε`, `Cov(ε) = σ²Ω`, together with decision procedures that
//! certify, on concrete instances, when two estimators coincide.
//!
//! ```
//! use bayeslin::{scenarios, estimators, Tol};
//!
//! let fx = scenarios::example_fixture(9.0).unwrap();
//! let tol = Tol::default();
//! let m = estimators::bayes_linear_map(&fx.design, fx.design.omega(), &fx.k1, &tol).unwrap();
//! assert!(bayeslin::linalg::rel_diff(&m.l, &fx.expected_map) < 1e-10);
//! ```

pub mod covariance;
pub mod equivalence;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod model;
pub mod problem;
pub mod risk;
pub mod scenarios;
pub mod sufficiency;
pub mod tolerance;

pub use error::{Error, Result};
pub use linalg::{RealMatrix, RealVector};
pub use model::{GeneralLinearDesign, PriorMoments};
pub use tolerance::ToleranceConfig;

/// Short alias used throughout examples and tests.
pub type Tol = ToleranceConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
