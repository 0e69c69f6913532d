//! Composite claim-severity modelling with threshold selection and
//! Monte Carlo estimation of solvency reserves.
//!
//! A composite severity model joins a right-truncated *bulk* distribution
//! (Gamma, log-normal, Weibull or log-Gamma) below a threshold `b` with a
//! Pareto type II distribution for the excesses `z - b` above it:
//!
//! ```text
//! f(z) = p·f₁(z)/F₁(b)                       z ≤ b
//!      = (1-p)·(α/β)(1 + (z-b)/β)^-(α+1)     z > b
//! ```
//!
//! The crate provides
//!
//! - [`distributions`]: densities, quantiles and samplers for the severity families,
//! - [`tailselect`]: six fixed-threshold selectors (M1–M6) plus the Hill estimator,
//! - [`fitting`]: maximum-likelihood fits of bulk and tail, and the simultaneous
//!   log-normal/Pareto fit (M7),
//! - [`composite`]: model assembly, evaluation, sampling and a text record format,
//! - [`reserve`]: compound-Poisson aggregate-loss simulation and quantile reserves,
//! - [`study`]: the replicated simulation-study harness with bias/RMSE tables,
//! - [`data`]: claim-file ingestion,
//! - [`analysis`]: thresholds, fits and reserves for one claim sample in a single call.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod composite;
pub mod data;
pub mod distributions;
mod error;
pub mod fitting;
pub mod optim;
pub mod quad;
pub mod reserve;
pub mod rng;
pub mod study;
pub mod tailselect;

pub use error::{Error, Result};
