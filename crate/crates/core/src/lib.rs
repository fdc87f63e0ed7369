//! Adaptive spectral cut-off estimation for nonparametric instrumental-variable
//! regression on the unit interval.
//!
//! The crate has four layers:
//!
//! - [`basis`]: the trigonometric basis and coefficient vectors,
//! - [`dgp`]: an exact simulator whose conditional-expectation operator is
//!   diagonal in that basis,
//! - [`estimator`] and [`risk`]: the data-driven cut-off and its oracle risks,
//! - [`study`] and [`experiment`]: Monte Carlo studies and the run harness
//!   behind the `spectral-iv` binary.
//!
//! ```
//! use spectral_iv::dgp::{generate_sample, DgpSpec};
//! use spectral_iv::estimator::{adaptive_estimate, EstimatorConfig};
//!
//! let spec = DgpSpec::default_sobolev();
//! let sample = generate_sample(&spec, 2_000, 7).unwrap();
//! let report = adaptive_estimate(&sample, &EstimatorConfig::default()).unwrap();
//! assert!(report.m_star <= report.resolution);
//! ```

pub mod basis;
pub mod dgp;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod risk;
pub mod rng;
pub mod study;

pub use basis::{BasisIndex, CoefficientVector, FunctionFamilySpec};
pub use dgp::{generate_sample, DgpSpec, IvSample};
pub use error::{Error, Result};
pub use estimator::{adaptive_estimate, EstimateReport, EstimatorConfig};
