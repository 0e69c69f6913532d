//! Threshold selection on a sorted claim sample.
//!
//! Every selector returns a [`ThresholdEstimate`] whose `b_hat` is an order
//! statistic of the sample (1-based `index`), never an interpolated value.
//! The simultaneous lognormal/Pareto selector (M7) lives in
//! [`crate::fitting::fit_scollnik`] because it is a full model fit.

mod exponentiality;
mod gertensgarbe;
mod hill;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use exponentiality::{
    exponentiality_statistics, select_exponentiality, select_exponentiality_or_fallback, select_exponentiality_with,
    ExponentialityRule,
};
pub use gertensgarbe::{gertensgarbe_series, select_gertensgarbe, MkVariance};
pub use hill::{estimate_second_order, hill, min_amse_k, select_min_amse_hill, HillEstimate, SecondOrderEstimates};

/// Threshold selection method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Fixed upper quantile, `k = 0.05 n`.
    M1,
    /// Square-root rule, `k = √n`.
    M2,
    /// Empirical rule, `k = n^(2/3) / ln ln n`.
    M3,
    /// Minimum asymptotic MSE of the Hill estimator.
    M4,
    /// Exponentiality test of the scaled log-spacings.
    M5,
    /// Gertensgarbe plot (sequential Mann–Kendall change point).
    M6,
    /// Simultaneous lognormal/Pareto fit.
    M7,
}

impl Method {
    pub const ALL: [Method; 7] = [Method::M1, Method::M2, Method::M3, Method::M4, Method::M5, Method::M6, Method::M7];

    pub fn tag(self) -> &'static str {
        match self {
            Method::M1 => "m1",
            Method::M2 => "m2",
            Method::M3 => "m3",
            Method::M4 => "m4",
            Method::M5 => "m5",
            Method::M6 => "m6",
            Method::M7 => "m7",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Method::M1 => "fixed quantile",
            Method::M2 => "square root",
            Method::M3 => "empirical rule",
            Method::M4 => "min AMSE Hill",
            Method::M5 => "exponentiality",
            Method::M6 => "Gertensgarbe",
            Method::M7 => "simultaneous",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}` (expected m1..m7)")))
    }
}

/// Claim sample sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    values: Vec<f64>,
}

impl SortedSample {
    /// Sorts the values; rejects non-finite or non-positive entries and empty input.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData("empty sample".into()));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Domain(format!("sample value {bad} is not a positive finite number")));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Order statistic `z_(i)` with 1-based `i`.
    ///
    /// # Panics
    /// If `i` is 0 or exceeds `n`.
    pub fn order_stat(&self, i: usize) -> f64 {
        self.values[i - 1]
    }

    /// Values `<= b`.
    pub fn below(&self, b: f64) -> &[f64] {
        &self.values[..self.count_le(b)]
    }

    /// Excesses `z - b` of the values strictly above `b`.
    pub fn excesses(&self, b: f64) -> Vec<f64> {
        self.values[self.count_le(b)..].iter().map(|z| z - b).collect()
    }

    /// Number of values `<= b`.
    pub fn count_le(&self, b: f64) -> usize {
        self.values.partition_point(|&z| z <= b)
    }
}

/// A selected threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub method: Method,
    /// Number of exceedances the rule asked for; real-valued for M1–M3.
    pub k: f64,
    /// 1-based order-statistic index of the threshold.
    pub index: usize,
    pub b_hat: f64,
    /// Set when the rule had to clamp or fall back.
    pub warning: Option<String>,
}

/// Integer closest to `x`, halves rounded away from zero.
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

fn estimate_at(sample: &SortedSample, method: Method, k: f64) -> Result<ThresholdEstimate> {
    let n = sample.len();
    let index = round_half_away(n as f64 - k);
    if !(index >= 1.0 && index <= (n as f64) - 1.0) {
        return Err(Error::InsufficientData(format!(
            "{method}: index {index} for k = {k:.4} is outside [1, {}]",
            n.saturating_sub(1)
        )));
    }
    let index = index as usize;
    Ok(ThresholdEstimate { method, k, index, b_hat: sample.order_stat(index), warning: None })
}

pub(crate) fn estimate_at_index(sample: &SortedSample, method: Method, k: usize, warning: Option<String>) -> ThresholdEstimate {
    let index = sample.len() - k;
    ThresholdEstimate { method, k: k as f64, index, b_hat: sample.order_stat(index), warning }
}

/// M1: `k = eps·n` exceedances.
pub fn select_fixed_quantile(sample: &SortedSample, eps: f64) -> Result<ThresholdEstimate> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0,1), got {eps}")));
    }
    estimate_at(sample, Method::M1, eps * sample.len() as f64)
}

/// M2: `k = √n` exceedances.
pub fn select_square_root(sample: &SortedSample) -> Result<ThresholdEstimate> {
    estimate_at(sample, Method::M2, (sample.len() as f64).sqrt())
}

/// M3: `k = n^(2/3) / ln ln n` exceedances.
pub fn select_empirical_rule(sample: &SortedSample) -> Result<ThresholdEstimate> {
    let n = sample.len() as f64;
    let lln = n.ln().ln();
    if !(lln > 0.0) {
        return Err(Error::InsufficientData(format!("m3 needs n > e, got n = {n}")));
    }
    estimate_at(sample, Method::M3, n.powf(2.0 / 3.0) / lln)
}

/// Runs one of the fixed-threshold selectors M1–M6.
///
/// M5 falls back to the largest admissible `k` (flagged) when no `k` passes.
/// M7 is a model fit and is rejected here.
pub fn select(sample: &SortedSample, method: Method) -> Result<ThresholdEstimate> {
    match method {
        Method::M1 => select_fixed_quantile(sample, 0.05),
        Method::M2 => select_square_root(sample),
        Method::M3 => select_empirical_rule(sample),
        Method::M4 => select_min_amse_hill(sample),
        Method::M5 => select_exponentiality_or_fallback(sample),
        Method::M6 => select_gertensgarbe(sample, MkVariance::AsPrinted),
        Method::M7 => Err(Error::InvalidParameter("m7 is selected by fitting::fit_scollnik".into())),
    }
}
