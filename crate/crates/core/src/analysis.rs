//! End-to-end analysis of one claim sample: thresholds, fits, composite models
//! and reserves for a grid of selectors and bulk families.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::composite::{build_composite, composite_from_scollnik, p_below_empirical, p_below_theoretical, CompositeModel, PMode};
use crate::distributions::Family;
use crate::fitting::{fit_bulk, fit_pareto_tail, fit_scollnik, BulkFit, FitMode, ScollnikFit, TailFit};
use crate::reserve::{estimate_reserves, ReserveEstimate};
use crate::rng::{derive_seed, Purpose};
use crate::tailselect::{select, Method, SortedSample, ThresholdEstimate};
use crate::{Error, Result};

/// Monte Carlo settings for the reserve step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReserveSettings {
    pub lambda: f64,
    pub eps: Vec<f64>,
    pub sims: usize,
    pub seed: u64,
}

/// What to compute.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisOptions {
    pub methods: Vec<Method>,
    pub families: Vec<Family>,
    pub p_mode: PMode,
    pub fit_mode: FitMode,
    /// Fit bulk and tail models (otherwise thresholds only).
    pub fit: bool,
    pub reserve: Option<ReserveSettings>,
}

impl AnalysisOptions {
    pub fn thresholds_only(methods: Vec<Method>) -> Self {
        Self { methods, families: Vec::new(), p_mode: PMode::Empirical, fit_mode: FitMode::default(), fit: false, reserve: None }
    }
}

/// One bulk family at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct BulkOutcome {
    pub family: Family,
    pub fit: Result<BulkFit>,
    pub model: Result<CompositeModel>,
    pub reserves: Option<Result<Vec<ReserveEstimate>>>,
}

/// Everything computed for one selector.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub threshold: Result<ThresholdEstimate>,
    pub tail: Option<Result<TailFit>>,
    /// Only for M7.
    pub scollnik: Option<ScollnikFit>,
    pub bulks: Vec<BulkOutcome>,
}

impl MethodOutcome {
    /// All errors in this outcome, in report order.
    pub fn errors(&self) -> Vec<&Error> {
        let mut out = Vec::new();
        if let Err(e) = &self.threshold {
            out.push(e);
        }
        if let Some(Err(e)) = &self.tail {
            out.push(e);
        }
        for b in &self.bulks {
            match (&b.fit, &b.model) {
                (Err(e), _) | (Ok(_), Err(e)) => out.push(e),
                _ => {}
            }
            if let Some(Err(e)) = &b.reserves {
                out.push(e);
            }
        }
        out
    }
}

/// Result of [`analyze`].
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    /// SHA-256 over the sample and options, identifying every row produced from them.
    pub digest: String,
    pub n: usize,
    pub methods: Vec<MethodOutcome>,
}

fn digest_of(sample: &SortedSample, options: &AnalysisOptions) -> String {
    let mut h = Sha256::new();
    for v in sample.values() {
        h.update(v.to_le_bytes());
    }
    h.update(format!("{options:?}").as_bytes());
    hex::encode(h.finalize())
}

/// M7 as a threshold estimate: its (continuous) `b` and the number of claims at or below it.
pub fn scollnik_threshold(sample: &SortedSample, fit: &ScollnikFit) -> ThresholdEstimate {
    let index = sample.count_le(fit.b);
    ThresholdEstimate { method: Method::M7, k: (sample.len() - index) as f64, index, b_hat: fit.b, warning: None }
}

/// Runs the configured selectors, fits and reserves on `sample`.
///
/// Failures are kept per item and never abort the rest. Reserve cell `j`
/// (counting M7 and every (selector, family) pair in order) is seeded from
/// `(Reserve, 0, j)` of the settings' seed.
pub fn analyze(sample: &SortedSample, options: &AnalysisOptions) -> Analysis {
    let mut cell = 0u64;
    let mut reserve_for = |model: &Result<CompositeModel>| -> Option<Result<Vec<ReserveEstimate>>> {
        let settings = options.reserve.as_ref()?;
        let seed = derive_seed(settings.seed, Purpose::Reserve, 0, cell);
        cell += 1;
        Some(
            model
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|m| estimate_reserves(m, settings.lambda, &settings.eps, settings.sims, seed)),
        )
    };
    let mut methods = Vec::new();
    for &method in &options.methods {
        if method == Method::M7 {
            let fit = fit_scollnik(sample);
            let mut out = MethodOutcome {
                method,
                threshold: fit.as_ref().map(|f| scollnik_threshold(sample, f)).map_err(Clone::clone),
                tail: None,
                scollnik: fit.as_ref().ok().copied(),
                bulks: Vec::new(),
            };
            if options.fit {
                if let Ok(f) = &fit {
                    let model = composite_from_scollnik(f);
                    let reserves = reserve_for(&model);
                    let spec = crate::distributions::DistributionSpec::lognormal(f.mu, f.sigma);
                    out.tail = Some(Ok(TailFit {
                        alpha: f.alpha,
                        beta: f.beta,
                        b: f.b,
                        n_exceed: sample.len() - sample.count_le(f.b),
                        loglik: f.loglik,
                        boundary: false,
                    }));
                    out.bulks.push(BulkOutcome {
                        family: Family::LogNormal,
                        fit: spec.map(|spec| BulkFit {
                            spec,
                            b: f.b,
                            mode: options.fit_mode,
                            loglik: f.loglik,
                            converged: f.converged,
                            n: sample.count_le(f.b),
                        }),
                        model,
                        reserves,
                    });
                }
            }
            methods.push(out);
            continue;
        }
        let threshold = select(sample, method);
        let mut out = MethodOutcome { method, threshold: threshold.clone(), tail: None, scollnik: None, bulks: Vec::new() };
        if options.fit {
            if let Ok(est) = &threshold {
                let b = est.b_hat;
                let tail = fit_pareto_tail(&sample.excesses(b), b);
                for &family in &options.families {
                    let fit = fit_bulk(sample.below(b), family, b, options.fit_mode);
                    let model = match (&fit, &tail) {
                        (Ok(bulk), Ok(t)) => {
                            let p = match options.p_mode {
                                PMode::Empirical => Ok(p_below_empirical(sample, b)),
                                _ => p_below_theoretical(bulk, b),
                            };
                            p.and_then(|p| build_composite(bulk, t, p, options.p_mode))
                        }
                        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                    };
                    let reserves = reserve_for(&model);
                    out.bulks.push(BulkOutcome { family, fit, model, reserves });
                }
                out.tail = Some(tail);
            }
        }
        methods.push(out);
    }
    Analysis { digest: digest_of(sample, options), n: sample.len(), methods }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> SortedSample {
        let g = DistributionSpec::gamma(10.0, 1.0).unwrap();
        let b = g.quantile(0.92).unwrap();
        let m = CompositeModel::new(g, DistributionSpec::pareto2(2.5, 75.0).unwrap(), b, 0.92, PMode::Empirical).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        SortedSample::new(m.sampler().sample(&mut rng, 2000)).unwrap()
    }

    #[test]
    fn grid_is_complete_and_reproducible() {
        let s = sample();
        let opts = AnalysisOptions {
            methods: vec![Method::M2, Method::M7],
            families: vec![Family::Gamma, Family::Weibull],
            p_mode: PMode::Empirical,
            fit_mode: FitMode::Truncated,
            fit: true,
            reserve: Some(ReserveSettings { lambda: 50.0, eps: vec![0.05, 0.01], sims: 5_000, seed: 3 }),
        };
        let a = analyze(&s, &opts);
        assert_eq!(a.methods.len(), 2);
        assert_eq!(a.methods[0].bulks.len(), 2);
        assert_eq!(a.methods[1].bulks.len(), 1);
        for m in &a.methods {
            assert!(m.errors().is_empty(), "{:?}", m.errors());
            for b in &m.bulks {
                let r = b.reserves.as_ref().unwrap().as_ref().unwrap();
                assert!(r[0].q_hat <= r[1].q_hat);
            }
        }
        let m7 = a.methods[1].threshold.as_ref().unwrap();
        assert_eq!(m7.index, s.count_le(m7.b_hat));
        assert_eq!(analyze(&s, &opts), a);
        let other = AnalysisOptions { p_mode: PMode::Theoretical, ..opts };
        assert_ne!(analyze(&s, &other).digest, a.digest);
    }

    #[test]
    fn failures_stay_local() {
        let s = SortedSample::new((1..=30).map(|i| 2.0 + 0.5 * i as f64).collect()).unwrap();
        let opts = AnalysisOptions {
            methods: vec![Method::M6, Method::M2],
            families: vec![Family::Gamma],
            p_mode: PMode::Empirical,
            fit_mode: FitMode::Truncated,
            fit: true,
            reserve: None,
        };
        let a = analyze(&s, &opts);
        assert!(matches!(a.methods[0].threshold, Err(Error::NoThresholdFound(_))));
        assert!(a.methods[1].threshold.is_ok());
        assert_eq!(a.methods[0].errors().len(), 1);
    }
}
