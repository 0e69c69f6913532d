use serde::{Deserialize, Serialize};

use super::{estimate_at_index, Method, SortedSample, ThresholdEstimate};
use crate::{Error, Result};

/// Hill estimate of the tail index `ξ = 1/α` from the top `k` observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillEstimate {
    pub k: usize,
    pub xi_hat: f64,
}

/// Second-order parameters `(ρ, λ)` of the Hall class, evaluated at level `k1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderEstimates {
    pub rho_hat: f64,
    pub lambda_hat: f64,
    pub k1: usize,
}

fn check_k(sample: &SortedSample, k: usize) -> Result<()> {
    let n = sample.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("k = {k} must lie in [1, {}]", n.saturating_sub(1))));
    }
    Ok(())
}

/// Mean of the top-`k` log-spacings relative to `z_(n-k)`.
pub fn hill(sample: &SortedSample, k: usize) -> Result<HillEstimate> {
    check_k(sample, k)?;
    let v = sample.values();
    let n = v.len();
    let base = v[n - k - 1].ln();
    let sum: f64 = v[n - k..].iter().map(|z| z.ln() - base).sum();
    Ok(HillEstimate { k, xi_hat: sum / k as f64 })
}

/// Log-moment statistics `M^(j)(k)` for `j = 1, 2, 3`.
fn log_moments(v: &[f64], k: usize) -> [f64; 3] {
    let n = v.len();
    let base = v[n - k - 1].ln();
    let mut m = [0.0; 3];
    for z in &v[n - k..] {
        let d = z.ln() - base;
        m[0] += d;
        m[1] += d * d;
        m[2] += d * d * d;
    }
    m.map(|x| x / k as f64)
}

/// Estimates `(ρ, λ)` at `k1 = ⌊n^0.999⌋`.
///
/// `ρ̂` is the ratio estimator with tuning `τ = 0` built from the first three
/// log-moments; `λ̂` is the scale estimator built from the scaled log-spacings
/// `U_i = i (ln z_(n-i+1) - ln z_(n-i))`. Since `λ` only enters the optimal `k`
/// squared, its absolute value is returned.
pub fn estimate_second_order(sample: &SortedSample) -> Result<SecondOrderEstimates> {
    let v = sample.values();
    let n = v.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!("second-order estimation needs n >= 10, got {n}")));
    }
    let k1 = ((n as f64).powf(0.999).floor() as usize).min(n - 1);
    let [m1, m2, m3] = log_moments(v, k1);
    let a = m1.ln() - 0.5 * (m2 / 2.0).ln();
    let b = 0.5 * (m2 / 2.0).ln() - (m3 / 6.0).ln() / 3.0;
    let t = a / b;
    let rho = -(3.0 * (t - 1.0) / (t - 3.0)).abs();
    if !rho.is_finite() {
        return Err(Error::EstimationFailed(format!("rho statistic is not finite (T = {t})")));
    }

    let kf = k1 as f64;
    let (mut d_rho, mut big_d0, mut big_d_rho, mut big_d_2rho) = (0.0, 0.0, 0.0, 0.0);
    for i in 1..=k1 {
        let u = i as f64 * (v[n - i].ln() - v[n - i - 1].ln());
        let w = (i as f64 / kf).powf(-rho);
        d_rho += w;
        big_d0 += u;
        big_d_rho += w * u;
        big_d_2rho += w * w * u;
    }
    let (d_rho, big_d0, big_d_rho, big_d_2rho) = (d_rho / kf, big_d0 / kf, big_d_rho / kf, big_d_2rho / kf);
    let lambda = (kf / n as f64).powf(rho) * (d_rho * big_d0 - big_d_rho) / (d_rho * big_d_rho - big_d_2rho);
    if !lambda.is_finite() || lambda == 0.0 {
        return Err(Error::EstimationFailed(format!("lambda estimate is degenerate ({lambda})")));
    }
    Ok(SecondOrderEstimates { rho_hat: rho, lambda_hat: lambda.abs(), k1 })
}

/// The AMSE-optimal number of exceedances
/// `⌊((1-ρ)² n^(-2ρ) / (-2ρλ²))^(1/(1-2ρ))⌋`, unclamped.
pub fn min_amse_k(n: usize, rho: f64, lambda: f64) -> f64 {
    let n = n as f64;
    ((1.0 - rho).powi(2) * n.powf(-2.0 * rho) / (-2.0 * rho * lambda * lambda)).powf(1.0 / (1.0 - 2.0 * rho)).floor()
}

/// M4: the Hill estimator's AMSE-optimal threshold, with `k` clamped to `[1, n-1]`.
pub fn select_min_amse_hill(sample: &SortedSample) -> Result<ThresholdEstimate> {
    let so = estimate_second_order(sample)?;
    let n = sample.len();
    let k0 = min_amse_k(n, so.rho_hat, so.lambda_hat);
    let max = (n - 1) as f64;
    let (k, warning) = if k0.is_nan() {
        (max, Some(format!("k0 undefined (rho = {}, lambda = {}); clamped to n-1", so.rho_hat, so.lambda_hat)))
    } else if k0 < 1.0 {
        (1.0, Some(format!("k0 = {k0} clamped to 1")))
    } else if k0 > max {
        (max, Some(format!("k0 = {k0} clamped to n-1")))
    } else {
        (k0, None)
    };
    Ok(estimate_at_index(sample, Method::M4, k as usize, warning))
}
