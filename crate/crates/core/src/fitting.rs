//! Maximum-likelihood fits: the bulk below a threshold, the Pareto tail above
//! it, and the simultaneous lognormal/Pareto model that also estimates the
//! threshold.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::distributions::{ln_std_normal_cdf, DistributionSpec, Family};
use crate::optim::{brent_minimize, nelder_mead, NelderMeadOptions};
use crate::tailselect::{hill, SortedSample};
use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Which likelihood the bulk fit maximises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    /// `Σ ln f(z) - n ln F(b)`: the density right-truncated at `b`.
    #[default]
    Truncated,
    /// `Σ ln f(z)`: the untruncated density.
    Plain,
}

impl FitMode {
    pub fn tag(self) -> &'static str {
        match self {
            FitMode::Truncated => "truncated",
            FitMode::Plain => "plain",
        }
    }
}

impl std::str::FromStr for FitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "truncated" => Ok(FitMode::Truncated),
            "plain" => Ok(FitMode::Plain),
            other => Err(Error::InvalidParameter(format!("unknown fit mode `{other}`"))),
        }
    }
}

/// Fitted bulk distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BulkFit {
    pub spec: DistributionSpec,
    pub b: f64,
    pub mode: FitMode,
    pub loglik: f64,
    pub converged: bool,
    pub n: usize,
}

/// Fitted Pareto type II tail for the excesses over `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub alpha: f64,
    pub beta: f64,
    pub b: f64,
    pub n_exceed: usize,
    pub loglik: f64,
    /// The profile likelihood kept increasing towards `β → ∞` (near-exponential
    /// excesses); the returned point is the edge of the search range.
    pub boundary: bool,
}

/// Simultaneous lognormal/Pareto fit with the threshold as a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScollnikFit {
    pub mu: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub b: f64,
    /// Mass at or below `b`, fixed by density continuity.
    pub r: f64,
    pub loglik: f64,
    pub converged: bool,
}

/// Log-likelihood of `data` under `spec`, optionally truncated at `b`.
pub fn bulk_loglik(data: &[f64], spec: &DistributionSpec, b: f64, mode: FitMode) -> f64 {
    let s: f64 = data.iter().map(|&z| spec.ln_pdf_unchecked(z)).sum();
    match mode {
        FitMode::Plain => s,
        FitMode::Truncated => s - data.len() as f64 * spec.cdf_unchecked(b).ln(),
    }
}

/// Sufficient statistics for the bulk families.
struct Stats {
    n: f64,
    sum: f64,
    sum_ln: f64,
    sum_ln2: f64,
    /// `Σ ln ln z`, only meaningful when every `z > 1`.
    sum_lnln: f64,
}

impl Stats {
    fn of(data: &[f64]) -> Self {
        let mut s = Stats { n: data.len() as f64, sum: 0.0, sum_ln: 0.0, sum_ln2: 0.0, sum_lnln: 0.0 };
        for &z in data {
            let l = z.ln();
            s.sum += z;
            s.sum_ln += l;
            s.sum_ln2 += l * l;
            s.sum_lnln += l.ln();
        }
        s
    }
}

/// Maps the optimiser's coordinates to a spec. LogNormal keeps `μ` on its own
/// scale; every other parameter is optimised on the log scale.
fn spec_from(family: Family, x: &[f64]) -> Option<DistributionSpec> {
    let (p1, p2) = match family {
        Family::LogNormal => (x[0], x[1].exp()),
        _ => (x[0].exp(), x[1].exp()),
    };
    DistributionSpec::new(family, p1, p2).ok()
}

#[cfg(test)]
fn coords_of(spec: &DistributionSpec) -> [f64; 2] {
    match spec.family() {
        Family::LogNormal => [spec.param1(), spec.param2().ln()],
        _ => [spec.param1().ln(), spec.param2().ln()],
    }
}

/// Untruncated log-likelihood from sufficient statistics (Weibull needs the data).
fn plain_loglik(family: Family, p1: f64, p2: f64, st: &Stats, data: &[f64]) -> f64 {
    let n = st.n;
    match family {
        Family::Gamma => (p1 - 1.0) * st.sum_ln - st.sum / p2 - n * p1 * p2.ln() - n * ln_gamma(p1),
        Family::LogNormal => {
            let ss = st.sum_ln2 - 2.0 * p1 * st.sum_ln + n * p1 * p1;
            -st.sum_ln - n * p2.ln() - n * LN_SQRT_2PI - ss / (2.0 * p2 * p2)
        }
        Family::Weibull => {
            let pow: f64 = data.iter().map(|z| (z / p2).powf(p1)).sum();
            n * p1.ln() - n * p1 * p2.ln() + (p1 - 1.0) * st.sum_ln - pow
        }
        Family::LogGamma => {
            // Gamma(shape p1, rate p2) on ln z, plus the Jacobian -Σ ln z
            n * p1 * p2.ln() - n * ln_gamma(p1) + (p1 - 1.0) * st.sum_lnln - p2 * st.sum_ln - st.sum_ln
        }
        Family::ParetoII => f64::NAN,
    }
}

fn initial_coords(family: Family, data: &[f64], st: &Stats) -> [f64; 2] {
    let n = st.n;
    match family {
        Family::Gamma => {
            let m = st.sum / n;
            let v = data.iter().map(|z| (z - m).powi(2)).sum::<f64>() / n;
            let v = if v > 0.0 { v } else { m * m * 1e-4 };
            [(m * m / v).ln(), (v / m).ln()]
        }
        Family::LogNormal => {
            let m = st.sum_ln / n;
            let v = (st.sum_ln2 / n - m * m).max(1e-8);
            [m, 0.5 * v.ln()]
        }
        Family::Weibull => {
            let m = st.sum_ln / n;
            let sd = (st.sum_ln2 / n - m * m).max(1e-8).sqrt();
            let k = PI / (sd * 6f64.sqrt());
            [k.ln(), m + 0.577_215_664_901_532_9 / k]
        }
        Family::LogGamma => {
            let x: Vec<f64> = data.iter().map(|z| z.ln()).collect();
            let m = x.iter().sum::<f64>() / n;
            let v = x.iter().map(|t| (t - m).powi(2)).sum::<f64>() / n;
            let v = if v > 0.0 { v } else { m * m * 1e-4 };
            [(m * m / v).ln(), (m / v).ln()]
        }
        Family::ParetoII => [0.0, 0.0],
    }
}

/// Fits a bulk family to the observations at or below `b`.
///
/// Returns the best iterate with `converged = false` when the simplex stalls.
pub fn fit_bulk(data: &[f64], family: Family, b: f64, mode: FitMode) -> Result<BulkFit> {
    if family == Family::ParetoII {
        return Err(Error::InvalidParameter("pareto2 is a tail family, not a bulk family".into()));
    }
    if data.len() < 5 {
        return Err(Error::InsufficientData(format!("bulk fit needs at least 5 observations, got {}", data.len())));
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::Domain(format!("threshold {b} must be positive and finite")));
    }
    let lower = if family == Family::LogGamma { 1.0 } else { 0.0 };
    if let Some(z) = data.iter().find(|&&z| !(z > lower && z <= b)) {
        return Err(Error::Domain(format!("{} bulk data must lie in ({lower}, {b}], found {z}", family.tag())));
    }

    if family == Family::LogNormal && mode == FitMode::Plain {
        let st = Stats::of(data);
        let mu = st.sum_ln / st.n;
        let sigma = (st.sum_ln2 / st.n - mu * mu).max(0.0).sqrt();
        let sigma = if sigma > 0.0 { sigma } else { f64::MIN_POSITIVE.sqrt() };
        let spec = DistributionSpec::lognormal(mu, sigma)?;
        let loglik = bulk_loglik(data, &spec, b, mode);
        return Ok(BulkFit { spec, b, mode, loglik, converged: true, n: data.len() });
    }

    let objective = Objective::new(family, data, b, mode);
    let x0 = initial_coords(family, data, &objective.st);
    let opts = NelderMeadOptions::default();
    let min = nelder_mead(|x| -objective.eval(x), &x0, &[0.5, 0.5], opts);
    let spec = spec_from(family, &min.x)
        .ok_or_else(|| Error::EstimationFailed(format!("{} fit left the parameter space", family.tag())))?;
    let loglik = bulk_loglik(data, &spec, b, mode);
    if !loglik.is_finite() {
        return Err(Error::EstimationFailed(format!("{} fit has non-finite likelihood", family.tag())));
    }
    Ok(BulkFit { spec, b, mode, loglik, converged: min.converged, n: data.len() })
}

/// Bulk objective on optimiser coordinates.
struct Objective<'a> {
    family: Family,
    data: &'a [f64],
    st: Stats,
    b: f64,
    mode: FitMode,
}

impl<'a> Objective<'a> {
    fn new(family: Family, data: &'a [f64], b: f64, mode: FitMode) -> Self {
        Objective { family, data, st: Stats::of(data), b, mode }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let Some(spec) = spec_from(self.family, x) else { return f64::NAN };
        let ll = plain_loglik(self.family, spec.param1(), spec.param2(), &self.st, self.data);
        match self.mode {
            FitMode::Plain => ll,
            FitMode::Truncated => {
                let mass = spec.cdf_unchecked(self.b);
                if mass > 0.0 {
                    ll - self.st.n * mass.ln()
                } else {
                    f64::NAN
                }
            }
        }
    }
}

/// Pareto log-likelihood of excesses at `(α, β)`.
pub fn pareto_loglik(y: &[f64], alpha: f64, beta: f64) -> f64 {
    let n = y.len() as f64;
    let s: f64 = y.iter().map(|v| (v / beta).ln_1p()).sum();
    n * alpha.ln() - n * beta.ln() - (alpha + 1.0) * s
}

/// Fits a Pareto type II law to excesses `y = z - b` by profiling out `α`.
pub fn fit_pareto_tail(y: &[f64], b: f64) -> Result<TailFit> {
    let n = y.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("tail fit needs at least 2 exceedances, got {n}")));
    }
    if let Some(v) = y.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Domain(format!("exceedances must be positive, found {v}")));
    }
    let nf = n as f64;
    let ybar = y.iter().sum::<f64>() / nf;
    let profile = |t: f64| -> f64 {
        let beta = t.exp();
        let s: f64 = y.iter().map(|v| (v / beta).ln_1p()).sum();
        let alpha = nf / s;
        nf * alpha.ln() - nf * beta.ln() - nf - s
    };

    // grid in t = ln β relative to the data scale, then Brent on the best cell
    const HALF_WIDTH: f64 = 14.0;
    const CELLS: usize = 112;
    let t0 = ybar.ln() - HALF_WIDTH;
    let h = 2.0 * HALF_WIDTH / CELLS as f64;
    let grid: Vec<f64> = (0..=CELLS).map(|i| profile(t0 + i as f64 * h)).collect();
    let best = grid
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::EstimationFailed("Pareto profile likelihood is not finite".into()))?;
    let boundary = best == CELLS;
    let t = if boundary {
        t0 + CELLS as f64 * h
    } else {
        let lo = t0 + best.saturating_sub(1) as f64 * h;
        let hi = t0 + (best + 1) as f64 * h;
        brent_minimize(|t| -profile(t), lo, hi, 1e-12, 200).0
    };
    let beta = t.exp();
    let alpha = nf / y.iter().map(|v| (v / beta).ln_1p()).sum::<f64>();
    Ok(TailFit { alpha, beta, b, n_exceed: n, loglik: pareto_loglik(y, alpha, beta), boundary })
}

/// Mixing weight `r = ρ/(ρ+β)` that makes the lognormal/Pareto density continuous at `b`.
pub fn scollnik_weight(mu: f64, sigma: f64, alpha: f64, beta: f64, b: f64) -> f64 {
    let zeta = (b.ln() - mu) / sigma;
    // ρ/β computed on the log scale to survive extreme ζ
    let ln_ratio = LN_SQRT_2PI + alpha.ln() + b.ln() + sigma.ln() + ln_std_normal_cdf(zeta) + 0.5 * zeta * zeta - beta.ln();
    1.0 / (1.0 + (-ln_ratio).exp())
}

/// Composite lognormal/Pareto log-likelihood on a sorted sample for a given threshold.
fn scollnik_loglik_sorted(v: &[f64], prefix: &LogPrefix, theta: &[f64; 5]) -> f64 {
    let [mu, sigma, alpha, beta, b] = *theta;
    if !(sigma > 0.0 && alpha > 0.0 && beta > 0.0 && b > 0.0) || !mu.is_finite() {
        return f64::NAN;
    }
    let n1 = v.partition_point(|&z| z <= b);
    let n2 = v.len() - n1;
    let r = scollnik_weight(mu, sigma, alpha, beta, b);
    let zeta = (b.ln() - mu) / sigma;
    let (s1, s2) = (prefix.s1[n1], prefix.s2[n1]);
    let n1f = n1 as f64;
    let lower = if n1 > 0 {
        let ss = s2 - 2.0 * mu * s1 + n1f * mu * mu;
        n1f * r.ln() - s1 - n1f * sigma.ln() - n1f * LN_SQRT_2PI - ss / (2.0 * sigma * sigma) - n1f * ln_std_normal_cdf(zeta)
    } else {
        0.0
    };
    let upper = if n2 > 0 {
        let n2f = n2 as f64;
        let s: f64 = v[n1..].iter().map(|z| ((z - b) / beta).ln_1p()).sum();
        n2f * (-r).ln_1p() + n2f * alpha.ln() - n2f * beta.ln() - (alpha + 1.0) * s
    } else {
        0.0
    };
    lower + upper
}

struct LogPrefix {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl LogPrefix {
    fn of(v: &[f64]) -> Self {
        let mut s1 = Vec::with_capacity(v.len() + 1);
        let mut s2 = Vec::with_capacity(v.len() + 1);
        let (mut a, mut c) = (0.0, 0.0);
        s1.push(0.0);
        s2.push(0.0);
        for z in v {
            let l = z.ln();
            a += l;
            c += l * l;
            s1.push(a);
            s2.push(c);
        }
        LogPrefix { s1, s2 }
    }
}

/// Composite lognormal/Pareto log-likelihood of `sample` at the given parameters.
pub fn scollnik_loglik(sample: &SortedSample, mu: f64, sigma: f64, alpha: f64, beta: f64, b: f64) -> f64 {
    let v = sample.values();
    scollnik_loglik_sorted(v, &LogPrefix::of(v), &[mu, sigma, alpha, beta, b])
}

/// Simultaneous estimation of `(μ, σ, α, β, b)`.
///
/// The threshold is profiled over the order statistics `z_(5) … z_(n-5)` on a
/// coarse grid that is refined around the best candidate down to single
/// indices; the other four parameters are optimised per candidate (warm
/// started). A final five-parameter simplex polishes the best point.
pub fn fit_scollnik(sample: &SortedSample) -> Result<ScollnikFit> {
    let v = sample.values();
    let n = v.len();
    if n < 20 {
        return Err(Error::InsufficientData(format!("simultaneous fit needs n >= 20, got {n}")));
    }
    let prefix = LogPrefix::of(v);

    // initial values
    let lower = &v[..(n * 9 / 10).max(2)];
    let m = lower.iter().map(|z| z.ln()).sum::<f64>() / lower.len() as f64;
    let sd = (lower.iter().map(|z| (z.ln() - m).powi(2)).sum::<f64>() / lower.len() as f64).sqrt().max(1e-3);
    let k = ((n as f64).sqrt().round() as usize).clamp(1, n - 1);
    let xi = hill(sample, k)?.xi_hat.max(1e-3);
    let alpha0 = (1.0 / xi).clamp(0.2, 50.0);
    let b_ref = v[n - k - 1];
    let me = v[n - k..].iter().map(|z| z - b_ref).sum::<f64>() / k as f64;
    let beta0 = (me * (alpha0 - 1.0).max(0.1)).max(1e-6 * b_ref);
    let x_init = [m, sd.ln(), alpha0.ln(), beta0.ln()];

    // the profile only ranks candidates; the final polish supplies the precision
    let opts = NelderMeadOptions { max_evals: 2000, xtol: 1e-5, restarts: 0 };
    let profile_at = |j: usize, x0: &[f64], fresh_start: bool| {
        let b = v[j - 1];
        let f = |x: &[f64]| -> f64 { -scollnik_loglik_sorted(v, &prefix, &[x[0], x[1].exp(), x[2].exp(), x[3].exp(), b]) };
        let mut best = nelder_mead(f, x0, &[0.3, 0.3, 0.3, 0.3], opts);
        if fresh_start && x0 != x_init {
            let fresh = nelder_mead(f, &x_init, &[0.3, 0.3, 0.3, 0.3], opts);
            if fresh.value < best.value {
                best = fresh;
            }
        }
        best
    };

    let (lo, hi) = (5usize, n - 5);
    let mut evaluated: std::collections::BTreeMap<usize, (f64, Vec<f64>)> = Default::default();
    let mut step = ((hi - lo) / 24).max(1);
    let mut candidates: Vec<usize> = (lo..=hi).step_by(step).chain(std::iter::once(hi)).collect();
    let mut warm = x_init.to_vec();
    let mut coarse = true;
    loop {
        for &j in &candidates {
            // a bulk of tied values has an unbounded likelihood (sigma -> 0)
            if evaluated.contains_key(&j) || v[j - 1] <= v[0] {
                continue;
            }
            let m = profile_at(j, &warm, coarse);
            if m.value.is_finite() {
                warm = m.x.clone();
                evaluated.insert(j, (m.value, m.x));
            }
        }
        let (&jbest, _) = evaluated
            .iter()
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(b.0)))
            .ok_or_else(|| Error::NonConvergence("no threshold candidate gave a finite likelihood".into()))?;
        if step == 1 {
            break;
        }
        let span = step;
        step = (step / 4).max(1);
        coarse = false;
        warm = evaluated[&jbest].1.clone();
        candidates = (jbest.saturating_sub(span).max(lo)..=(jbest + span).min(hi)).step_by(step).collect();
    }
    let (&jbest, (_, x)) =
        evaluated.iter().min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(b.0))).expect("at least one candidate");

    // joint polish with b free, b on the log scale
    let b0 = v[jbest - 1];
    // b stays inside the scanned range of order statistics
    let f5 = |x: &[f64]| -> f64 {
        let b = x[4].exp();
        let n1 = v.partition_point(|&z| z <= b);
        if n1 < lo || n1 > hi || v[n1 - 1] <= v[0] {
            return f64::INFINITY;
        }
        -scollnik_loglik_sorted(v, &prefix, &[x[0], x[1].exp(), x[2].exp(), x[3].exp(), b])
    };
    let x5 = [x[0], x[1], x[2], x[3], b0.ln()];
    let polish = nelder_mead(f5, &x5, &[0.05, 0.05, 0.05, 0.05, 0.01], NelderMeadOptions::default());
    let profile_value = f5(&x5);
    let (x, converged) = if polish.value <= profile_value { (polish.x, polish.converged) } else { (x5.to_vec(), false) };
    let (mu, sigma, alpha, beta, b) = (x[0], x[1].exp(), x[2].exp(), x[3].exp(), x[4].exp());
    let loglik = scollnik_loglik_sorted(v, &prefix, &[mu, sigma, alpha, beta, b]);
    if !loglik.is_finite() {
        return Err(Error::NonConvergence("simultaneous fit ended at a non-finite likelihood".into()));
    }
    Ok(ScollnikFit { mu, sigma, alpha, beta, b, r: scollnik_weight(mu, sigma, alpha, beta, b), loglik, converged })
}
