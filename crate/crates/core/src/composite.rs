//! Composite severity model: a right-truncated bulk below the threshold `b`
//! and a Pareto type II law for the excesses above it, mixed with weight
//! `p = P(Z <= b)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distributions::{pareto2_invert, DistributionSpec, Family, TruncatedSampler, TruncatedSpec};
use crate::fitting::{BulkFit, FitMode, ScollnikFit, TailFit};
use crate::tailselect::SortedSample;
use crate::{Error, Result};

/// How the below-threshold probability was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PMode {
    /// Fraction of observations at or below `b`.
    Empirical,
    /// Fitted bulk cdf at `b`.
    Theoretical,
    /// Continuity weight of the simultaneous lognormal/Pareto fit.
    Mixing,
}

impl PMode {
    pub fn tag(self) -> &'static str {
        match self {
            PMode::Empirical => "empirical",
            PMode::Theoretical => "theoretical",
            PMode::Mixing => "mixing",
        }
    }
}

impl fmt::Display for PMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.tag())
    }
}

impl FromStr for PMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "empirical" | "emp" => Ok(PMode::Empirical),
            "theoretical" | "the" => Ok(PMode::Theoretical),
            "mixing" => Ok(PMode::Mixing),
            other => Err(Error::InvalidParameter(format!("unknown p-mode `{other}`"))),
        }
    }
}

/// Composite bulk/Pareto severity model.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeModel {
    trunc: TruncatedSpec,
    tail: DistributionSpec,
    p_below: f64,
    p_mode: PMode,
    fit_mode: FitMode,
}

impl CompositeModel {
    /// `bulk` is the untruncated bulk family, `tail` a `ParetoII` spec for the excesses.
    pub fn new(bulk: DistributionSpec, tail: DistributionSpec, b: f64, p_below: f64, p_mode: PMode) -> Result<Self> {
        if tail.family() != Family::ParetoII {
            return Err(Error::InvalidParameter(format!("tail must be pareto2, got {}", tail.family())));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::Domain(format!("threshold {b} must be positive and finite")));
        }
        if !(0.0..=1.0).contains(&p_below) {
            return Err(Error::InvalidParameter(format!("p_below = {p_below} outside [0, 1]")));
        }
        let trunc = TruncatedSpec::new(bulk, b)?;
        Ok(Self { trunc, tail, p_below, p_mode, fit_mode: FitMode::default() })
    }

    /// Records how the bulk parameters were fitted (reported, not used in evaluation).
    pub fn with_fit_mode(mut self, fit_mode: FitMode) -> Self {
        self.fit_mode = fit_mode;
        self
    }

    pub fn bulk(&self) -> &DistributionSpec {
        self.trunc.base()
    }

    pub fn tail(&self) -> &DistributionSpec {
        &self.tail
    }

    pub fn threshold(&self) -> f64 {
        self.trunc.upper()
    }

    pub fn p_below(&self) -> f64 {
        self.p_below
    }

    pub fn p_mode(&self) -> PMode {
        self.p_mode
    }

    pub fn fit_mode(&self) -> FitMode {
        self.fit_mode
    }

    pub fn truncated_bulk(&self) -> &TruncatedSpec {
        &self.trunc
    }

    /// Same model with a different below-threshold probability.
    pub fn with_p_below(&self, p_below: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_below) {
            return Err(Error::InvalidParameter(format!("p_below = {p_below} outside [0, 1]")));
        }
        Ok(Self { p_below, ..self.clone() })
    }

    fn check(z: f64) -> Result<()> {
        if z.is_finite() && z > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("claim size {z} must be positive and finite")))
        }
    }

    pub fn pdf(&self, z: f64) -> Result<f64> {
        Self::check(z)?;
        let b = self.threshold();
        Ok(if z <= b {
            self.p_below * self.trunc.base().ln_pdf_unchecked(z).exp() / self.trunc.mass()
        } else {
            (1.0 - self.p_below) * self.tail.ln_pdf_unchecked(z - b).exp()
        })
    }

    pub fn cdf(&self, z: f64) -> Result<f64> {
        Self::check(z)?;
        let b = self.threshold();
        Ok(if z < b {
            self.p_below * (self.trunc.base().cdf_unchecked(z) / self.trunc.mass()).min(1.0)
        } else if z == b {
            self.p_below
        } else {
            self.p_below + (1.0 - self.p_below) * self.tail.cdf_unchecked(z - b)
        })
    }

    /// Mean claim size, when the tail has `α > 1`.
    pub fn mean(&self) -> Option<f64> {
        let (alpha, beta) = (self.tail.param1(), self.tail.param2());
        if alpha <= 1.0 {
            return None;
        }
        let b = self.threshold();
        let lower = self.trunc.base().support_lower();
        let f = |z: f64| z * self.trunc.base().ln_pdf_unchecked(z).exp();
        let below = crate::quad::integrate(f, lower, b, 1e-12) / self.trunc.mass();
        Some(self.p_below * below + (1.0 - self.p_below) * (b + beta / (alpha - 1.0)))
    }

    /// Sampler with a precomputed inversion table for the bulk.
    pub fn sampler(&self) -> CompositeSampler {
        CompositeSampler {
            bulk: TruncatedSampler::new(self.trunc),
            alpha: self.tail.param1(),
            beta: self.tail.param2(),
            b: self.threshold(),
            p_below: self.p_below,
        }
    }

    /// Canonical text record: one `key=value` per line, numbers with 12 significant digits.
    pub fn to_record(&self) -> String {
        let body = self.record_body();
        format!("{body}digest={}\n", digest_hex(&body))
    }

    /// SHA-256 of the canonical record body, hex encoded.
    pub fn digest(&self) -> String {
        digest_hex(&self.record_body())
    }

    fn record_body(&self) -> String {
        let bulk = self.trunc.base();
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        put("format", "tailrisk-composite".into());
        put("version", "1".into());
        put("bulk.family", bulk.family().tag().into());
        put("bulk.param1", fmt_sig(bulk.param1()));
        put("bulk.param2", fmt_sig(bulk.param2()));
        put("bulk.fit_mode", self.fit_mode.tag().into());
        put("tail.alpha", fmt_sig(self.tail.param1()));
        put("tail.beta", fmt_sig(self.tail.param2()));
        put("threshold", fmt_sig(self.threshold()));
        put("p_below", fmt_sig(self.p_below));
        put("p_mode", self.p_mode.tag().into());
        s
    }

    /// Parses a record written by [`CompositeModel::to_record`], verifying its digest.
    pub fn from_record(text: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        let mut body = String::new();
        let mut digest = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, message: format!("expected key=value, got `{line}`") })?;
            let (k, v) = (k.trim(), v.trim());
            if k == "digest" {
                digest = Some(v.to_string());
                continue;
            }
            body.push_str(&format!("{k}={v}\n"));
            fields.insert(k.to_string(), (i + 1, v.to_string()));
        }
        let get = |k: &str| -> Result<&(usize, String)> {
            fields.get(k).ok_or_else(|| Error::Parse { line: 0, message: format!("missing key `{k}`") })
        };
        let num = |k: &str| -> Result<f64> {
            let (line, v) = get(k)?;
            v.parse::<f64>().map_err(|_| Error::Parse { line: *line, message: format!("`{k}` is not a number: `{v}`") })
        };
        let parsed = |k: &str| -> Result<String> { Ok(get(k)?.1.clone()) };
        if parsed("format")? != "tailrisk-composite" {
            return Err(Error::Parse { line: get("format")?.0, message: "not a composite model record".into() });
        }
        if parsed("version")? != "1" {
            return Err(Error::Parse { line: get("version")?.0, message: "unsupported record version".into() });
        }
        let family: Family = parsed("bulk.family")?.parse()?;
        let bulk = DistributionSpec::new(family, num("bulk.param1")?, num("bulk.param2")?)?;
        let tail = DistributionSpec::pareto2(num("tail.alpha")?, num("tail.beta")?)?;
        let p_mode: PMode = parsed("p_mode")?.parse()?;
        let fit_mode: FitMode = parsed("bulk.fit_mode")?.parse()?;
        let model = Self::new(bulk, tail, num("threshold")?, num("p_below")?, p_mode)?.with_fit_mode(fit_mode);
        if let Some(d) = digest {
            let expect = model.digest();
            if d != expect {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("digest mismatch: record says {d}, content gives {expect}"),
                });
            }
        }
        Ok(model)
    }
}

/// Draws claim sizes from a [`CompositeModel`].
#[derive(Debug, Clone)]
pub struct CompositeSampler {
    bulk: TruncatedSampler,
    alpha: f64,
    beta: f64,
    b: f64,
    p_below: f64,
}

impl CompositeSampler {
    pub fn p_below(&self) -> f64 {
        self.p_below
    }

    /// Truncated-bulk draw (at or below `b`).
    #[inline]
    pub fn bulk_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.bulk.sample_one(rng)
    }

    /// Above-threshold draw `b + Y`, `Y ~ ParetoII(α, β)`.
    #[inline]
    pub fn tail_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.b + pareto2_invert(self.alpha, self.beta, rng.random())
    }

    #[inline]
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if rng.random::<f64>() < self.p_below {
            self.bulk_one(rng)
        } else {
            self.tail_one(rng)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }
}

/// Assembles a composite model from separate bulk and tail fits.
pub fn build_composite(bulk: &BulkFit, tail: &TailFit, p_below: f64, p_mode: PMode) -> Result<CompositeModel> {
    if bulk.b != tail.b {
        return Err(Error::ThresholdMismatch { bulk: bulk.b, tail: tail.b });
    }
    let tail_spec = DistributionSpec::pareto2(tail.alpha, tail.beta)?;
    Ok(CompositeModel::new(bulk.spec, tail_spec, bulk.b, p_below, p_mode)?.with_fit_mode(bulk.mode))
}

/// The continuous lognormal/Pareto model of a simultaneous fit.
pub fn composite_from_scollnik(fit: &ScollnikFit) -> Result<CompositeModel> {
    CompositeModel::new(
        DistributionSpec::lognormal(fit.mu, fit.sigma)?,
        DistributionSpec::pareto2(fit.alpha, fit.beta)?,
        fit.b,
        fit.r,
        PMode::Mixing,
    )
}

/// Observed fraction of claims at or below `b_hat`.
pub fn p_below_empirical(sample: &SortedSample, b_hat: f64) -> f64 {
    sample.count_le(b_hat) as f64 / sample.len() as f64
}

/// Fitted bulk cdf at `b_hat`.
pub fn p_below_theoretical(bulk: &BulkFit, b_hat: f64) -> Result<f64> {
    if !bulk.converged {
        return Err(Error::NonConvergence(format!("bulk {} fit did not converge", bulk.spec.family())));
    }
    if b_hat.is_infinite() && b_hat > 0.0 {
        return Ok(1.0);
    }
    bulk.spec.cdf(b_hat)
}

fn digest_hex(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

/// Decimal rendering with 12 significant digits, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&mag) {
        return format!("{x:.11e}");
    }
    let decimals = (11 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::fit_bulk;
    use crate::quad::{integrate, integrate_to_infinity};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gamma_pareto() -> CompositeModel {
        let g = DistributionSpec::gamma(10.0, 1.0).unwrap();
        let b = g.quantile(0.92).unwrap();
        CompositeModel::new(g, DistributionSpec::pareto2(2.5, 75.0).unwrap(), b, 0.92, PMode::Theoretical).unwrap()
    }

    fn total_mass(m: &CompositeModel) -> f64 {
        let b = m.threshold();
        let lo = m.bulk().support_lower();
        let f = |z: f64| if z > 0.0 { m.pdf(z).unwrap() } else { 0.0 };
        integrate(f, lo, b, 1e-12) + integrate_to_infinity(f, b, 1e-12)
    }

    #[test]
    fn cdf_landmarks() {
        let m = gamma_pareto();
        let b = m.threshold();
        assert_eq!(m.cdf(b).unwrap(), 0.92);
        let med = 75.0 * (2f64.powf(0.4) - 1.0);
        assert!((m.cdf(b + med).unwrap() - (0.92 + 0.04)).abs() < 1e-14);
        assert!(m.cdf(1e300).unwrap() > 1.0 - 1e-12);
        assert!(m.pdf(0.0).is_err() && m.cdf(-1.0).is_err());
    }

    #[test]
    fn density_just_above_threshold() {
        let m = gamma_pareto();
        let above = m.pdf(m.threshold() * (1.0 + 1e-15) + 1e-13).unwrap();
        assert!((above - 0.08 * 2.5 / 75.0).abs() < 1e-12);
    }

    #[test]
    fn masses_match_construction() {
        for p in [0.0, 0.3, 0.92, 1.0] {
            let m = gamma_pareto().with_p_below(p).unwrap();
            let below = integrate(|z| m.pdf(z).unwrap(), 1e-300, m.threshold(), 1e-13);
            assert!((below - p).abs() < 1e-8, "{p}: {below}");
            assert!((total_mass(&m) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn theoretical_weight_with_plain_fit_is_the_untruncated_bulk() {
        let data = [1.0, 2.0, 3.5, 4.0, 5.5, 6.0, 7.5, 2.2, 3.3];
        let bulk = fit_bulk(&data, Family::Gamma, 8.0, FitMode::Plain).unwrap();
        let p = p_below_theoretical(&bulk, 8.0).unwrap();
        let tail = TailFit { alpha: 2.0, beta: 3.0, b: 8.0, n_exceed: 3, loglik: 0.0, boundary: false };
        let m = build_composite(&bulk, &tail, p, PMode::Theoretical).unwrap();
        for z in [0.5, 2.0, 5.0, 7.9, 8.0] {
            let raw = bulk.spec.pdf(z).unwrap();
            assert!((m.pdf(z).unwrap() - raw).abs() < 1e-10 * raw.max(1e-300));
        }
    }

    #[test]
    fn threshold_mismatch_is_rejected() {
        let bulk = fit_bulk(&[1.0, 2.0, 3.0, 4.0, 5.0], Family::Gamma, 6.0, FitMode::Plain).unwrap();
        let tail = TailFit { alpha: 2.0, beta: 3.0, b: 6.5, n_exceed: 3, loglik: 0.0, boundary: false };
        assert!(matches!(build_composite(&bulk, &tail, 0.5, PMode::Empirical), Err(Error::ThresholdMismatch { .. })));
    }

    #[test]
    fn empirical_weight() {
        let s = SortedSample::new((1..=100).map(|i| i as f64).collect()).unwrap();
        assert_eq!(p_below_empirical(&s, 95.0), 0.95);
        assert_eq!(p_below_empirical(&s, 0.5), 0.0);
        let s = SortedSample::new(vec![1.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(p_below_empirical(&s, 2.0), 0.75);
    }

    #[test]
    fn theoretical_weight_limits() {
        let g = DistributionSpec::gamma(10.0, 1.0).unwrap();
        let b = g.quantile(0.92).unwrap();
        let bulk = BulkFit { spec: g, b, mode: FitMode::Truncated, loglik: 0.0, converged: true, n: 1 };
        assert!((p_below_theoretical(&bulk, b).unwrap() - 0.92).abs() < 1e-12);
        assert_eq!(p_below_theoretical(&bulk, f64::INFINITY).unwrap(), 1.0);
        let stalled = BulkFit { converged: false, ..bulk };
        assert!(p_below_theoretical(&stalled, b).is_err());
    }

    #[test]
    fn sampling_respects_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = gamma_pareto();
        let b = m.threshold();
        let all_bulk = m.with_p_below(1.0).unwrap().sampler().sample(&mut rng, 10_000);
        assert!(all_bulk.iter().all(|&z| z <= b));
        let all_tail = m.with_p_below(0.0).unwrap().sampler().sample(&mut rng, 10_000);
        assert!(all_tail.iter().all(|&z| z > b));
        let z = m.sampler().sample(&mut rng, 1_000_000);
        let frac = z.iter().filter(|&&x| x <= b).count() as f64 / 1e6;
        assert!((frac - 0.92).abs() < 0.002, "{frac}");
    }

    #[test]
    fn samples_fall_inside_dkw_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let models = [
            gamma_pareto(),
            CompositeModel::new(
                DistributionSpec::loggamma(6.0, 3.04).unwrap(),
                DistributionSpec::pareto2(2.5, 75.0).unwrap(),
                30.0,
                0.9,
                PMode::Empirical,
            )
            .unwrap(),
        ];
        for m in models {
            let n = 100_000;
            let mut z = m.sampler().sample(&mut rng, n);
            z.sort_by(f64::total_cmp);
            let band = ((2.0f64 / 0.001).ln() / (2.0 * n as f64)).sqrt();
            let mut worst = 0.0f64;
            for (i, &x) in z.iter().enumerate() {
                let f = m.cdf(x).unwrap();
                worst = worst.max((f - i as f64 / n as f64).abs()).max((f - (i + 1) as f64 / n as f64).abs());
            }
            assert!(worst < band, "{worst} vs {band}");
        }
    }

    #[test]
    fn record_round_trip_and_digest() {
        let m = gamma_pareto().with_fit_mode(FitMode::Plain);
        let rec = m.to_record();
        assert!(rec.contains("bulk.family=gamma\n") && rec.contains("p_below=0.92\n"));
        let back = CompositeModel::from_record(&rec).unwrap();
        assert_eq!(back.to_record(), rec);
        assert_eq!(back.fit_mode(), FitMode::Plain);
        assert!((back.threshold() / m.threshold() - 1.0).abs() < 1e-11);
        let tampered = rec.replace("tail.alpha=2.5", "tail.alpha=2.6");
        assert!(matches!(CompositeModel::from_record(&tampered), Err(Error::Parse { .. })));
        assert!(CompositeModel::from_record("format=tailrisk-composite\nversion=1\n").is_err());
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_sig(1093.48), "1093.48");
        assert_eq!(fmt_sig(std::f64::consts::PI), "3.14159265359");
        assert_eq!(fmt_sig(0.000123456789012345), "0.000123456789012");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(123456789012345.0), "123456789012345");
        assert_eq!(fmt_sig(1e-9), "1.00000000000e-9");
    }
}
