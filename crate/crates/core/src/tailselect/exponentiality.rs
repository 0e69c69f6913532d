use super::{estimate_at_index, Method, SortedSample, ThresholdEstimate};
use crate::{Error, Result};

const CRITICAL: f64 = 1.25;

/// How the stopping level is read off the `Q` profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExponentialityRule {
    /// Smallest admissible `k` with `Q(k) >= 1.25`.
    #[default]
    FirstExceedance,
    /// Smallest admissible `k` with `Q(j) >= 1.25` for every admissible `j >= k`.
    Persistent,
}

/// The exponentiality statistics `T(k)` for `k = 1..n-1` and `Q(k)` for every
/// admissible `k` (`k + ⌊k/2⌋ < n`). Index 0 of each vector is unused.
///
/// `T(k) = √(3/k³) Σ_{i≤k} (k-2i+1) U_i / ((1/k) Σ_{i≤k} U_i)` with scaled
/// log-spacings `U_i = i (ln z_(n-i+1) - ln z_(n-i))`; `T(k) = 0` when the
/// denominator vanishes. `Q(k)` is the root mean square of `T` over the window
/// `[k - ⌊k/2⌋, k + ⌊k/2⌋]`. Both are computed from prefix sums in `O(n)`.
pub fn exponentiality_statistics(sample: &SortedSample) -> (Vec<f64>, Vec<f64>) {
    let v = sample.values();
    let n = v.len();
    let mut t = vec![0.0; n.max(1)];
    let (mut s0, mut s1) = (0.0, 0.0);
    for k in 1..n {
        let u = k as f64 * (v[n - k].ln() - v[n - k - 1].ln());
        s0 += u;
        s1 += k as f64 * u;
        let kf = k as f64;
        let num = (kf + 1.0) * s0 - 2.0 * s1;
        t[k] = if s0 > 0.0 { (3.0 / (kf * kf * kf)).sqrt() * num / (s0 / kf) } else { 0.0 };
    }
    let mut cum = vec![0.0; n.max(1)];
    for k in 1..n {
        cum[k] = cum[k - 1] + t[k] * t[k];
    }
    let mut q = Vec::new();
    q.push(0.0);
    for k in 1..n {
        let h = k / 2;
        if k + h >= n {
            break;
        }
        let sum = cum[k + h] - cum[k - h - 1];
        q.push((sum / (2 * h + 1) as f64).sqrt());
    }
    (t, q)
}

fn stopping_k(q: &[f64], rule: ExponentialityRule) -> Option<usize> {
    let last = q.len().checked_sub(1).filter(|&l| l >= 1)?;
    match rule {
        ExponentialityRule::FirstExceedance => (1..=last).find(|&k| q[k] >= CRITICAL),
        ExponentialityRule::Persistent => {
            let mut k = None;
            for j in (1..=last).rev() {
                if q[j] < CRITICAL {
                    break;
                }
                k = Some(j);
            }
            k
        }
    }
}

/// M5: exponentiality test with the default rule; errors when no admissible `k` passes.
pub fn select_exponentiality(sample: &SortedSample) -> Result<ThresholdEstimate> {
    select_exponentiality_with(sample, ExponentialityRule::default())
}

/// M5 with an explicit stopping rule.
pub fn select_exponentiality_with(sample: &SortedSample, rule: ExponentialityRule) -> Result<ThresholdEstimate> {
    if sample.len() < 3 {
        return Err(Error::InsufficientData("exponentiality test needs n >= 3".into()));
    }
    let (_, q) = exponentiality_statistics(sample);
    match stopping_k(&q, rule) {
        Some(k) => Ok(estimate_at_index(sample, Method::M5, k, None)),
        None => Err(Error::NoThresholdFound(format!(
            "exponentiality: no admissible k up to {} satisfies the {CRITICAL} rule",
            q.len().saturating_sub(1)
        ))),
    }
}

/// M5 with the fallback `k = n - 1` (smallest order statistic) when the test finds nothing.
pub fn select_exponentiality_or_fallback(sample: &SortedSample) -> Result<ThresholdEstimate> {
    match select_exponentiality(sample) {
        Err(Error::NoThresholdFound(msg)) => {
            Ok(estimate_at_index(sample, Method::M5, sample.len() - 1, Some(format!("{msg}; fell back to k = n-1"))))
        }
        other => other,
    }
}
