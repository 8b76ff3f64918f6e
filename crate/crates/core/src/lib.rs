//! Survival-outcome feature-selection benchmark.
//!
//! Survival times are generated from a 10-covariate Cox model with a
//! Weibull-type baseline, half of the true covariates are hidden, and ten
//! selection procedures (univariate and multivariate Cox, elastic-net Cox
//! with cross-validated penalties, logistic and Gaussian screens on
//! log-time, and two composite pipelines) are scored on whether they keep
//! every observed true feature, reject every noise feature, and order the
//! true effects correctly.
//!
//! Module map:
//!
//! - [`sim`]: correlated Gaussian features, Cox survival times, censoring,
//!   partially observed dataset assembly.
//! - [`glm`]: ordinary least squares and logistic regression with Wald
//!   inference.
//! - [`cox`]: Breslow partial likelihood and Newton-Raphson fitting.
//! - [`elnet`]: elastic-net coordinate descent for the Gaussian and Cox
//!   families, lambda paths and K-fold cross-validation.
//! - [`selectors`]: the selection procedures.
//! - [`bench`]: per-replicate scoring, aggregation and the parallel scenario
//!   runner.

pub mod bench;
pub mod config;
pub mod cox;
pub mod elnet;
pub mod error;
mod linalg;
pub mod glm;
pub mod selectors;
pub mod sim;
pub mod stats;
pub mod stream;

pub use config::{ScenarioConfig, SolverSettings};
pub use error::{Error, Result};
