//! Replicated simulation study: draw samples from a known composite model,
//! run every threshold selector and bulk fit, estimate reserves, and report
//! bias and RMSE against the reserve of the true model.
//!
//! # Seeds
//!
//! All randomness derives from the configured master seed through
//! [`crate::rng`]: the sample of replicate `i` uses stream
//! `(Sample, i, 0)`, the reserve simulation of cell `j` in replicate `i` is
//! seeded from `(Reserve, i, j)`, and the ground-truth reserve from
//! `(Truth, 0, 0)`. Results are therefore identical for any worker count.
//!
//! # Config file
//!
//! ```toml
//! schema = 1
//! true_family = "gamma"        # gamma | lognormal | weibull | loggamma
//! # true_params = [10.0, 1.0]  # defaults to the reference parameters of the family
//! # tail = [2.5, 75.0]         # Pareto (alpha, beta) of the excesses
//! gamma = 0.08                 # tail fraction; b is the (1 - gamma) quantile
//! n = 5000
//! lambda = 50.0
//! eps = [0.05, 0.01, 0.005]    # or a single number
//! replications = 100           # alias N
//! sims = 100000                # alias m
//! # truth_sims = 1000000
//! p_mode = ["empirical", "theoretical"]
//! selectors = ["m1", "m2", "m3", "m4", "m5", "m6", "m7"]
//! bulk_families = ["gamma", "lognormal", "weibull", "loggamma"]
//! seed = 1
//! # fit_mode = "truncated"
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::composite::{build_composite, composite_from_scollnik, p_below_empirical, p_below_theoretical, CompositeModel, PMode};
use crate::distributions::{DistributionSpec, Family};
use crate::fitting::{fit_bulk, fit_pareto_tail, fit_scollnik, FitMode};
use crate::reserve::estimate_reserves;
use crate::rng::{derive_seed, substream, Purpose};
use crate::tailselect::{select, Method, SortedSample};
use crate::{Error, Result};

/// Fitted `p_below` under which a cell is flagged as having a near-zero bulk weight.
pub const LOW_P: f64 = 0.1;

/// Reference bulk parameters of the study design.
pub fn reference_params(family: Family) -> [f64; 2] {
    match family {
        Family::Gamma => [10.0, 1.0],
        Family::LogNormal => [1.5, 1.27],
        Family::Weibull => [2.0, 11.28],
        Family::LogGamma => [6.0, 3.04],
        Family::ParetoII => [2.5, 75.0],
    }
}

fn default_tail() -> [f64; 2] {
    [2.5, 75.0]
}
fn default_replications() -> usize {
    100
}
fn default_sims() -> usize {
    100_000
}
fn default_truth_sims() -> usize {
    1_000_000
}
fn default_p_modes() -> Vec<PMode> {
    vec![PMode::Empirical]
}
fn default_selectors() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_families() -> Vec<Family> {
    Family::BULK.to_vec()
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

/// One simulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub true_family: Family,
    #[serde(default)]
    pub true_params: Option<[f64; 2]>,
    #[serde(default = "default_tail")]
    pub tail: [f64; 2],
    pub gamma: f64,
    pub n: usize,
    pub lambda: f64,
    #[serde(deserialize_with = "one_or_many")]
    pub eps: Vec<f64>,
    #[serde(default = "default_replications", alias = "N")]
    pub replications: usize,
    #[serde(default = "default_sims", alias = "m")]
    pub sims: usize,
    #[serde(default = "default_truth_sims")]
    pub truth_sims: usize,
    #[serde(default = "default_p_modes", alias = "p_mode", deserialize_with = "one_or_many")]
    pub p_modes: Vec<PMode>,
    #[serde(default = "default_selectors")]
    pub selectors: Vec<Method>,
    #[serde(default = "default_families")]
    pub bulk_families: Vec<Family>,
    pub seed: u64,
    #[serde(default)]
    pub fit_mode: FitMode,
}

impl ExperimentConfig {
    /// A configuration with the reference parameters of `true_family` and CI-scale defaults.
    pub fn new(true_family: Family, gamma: f64, n: usize, lambda: f64, eps: Vec<f64>, seed: u64) -> Self {
        Self {
            schema: 1,
            true_family,
            true_params: None,
            tail: default_tail(),
            gamma,
            n,
            lambda,
            eps,
            replications: default_replications(),
            sims: default_sims(),
            truth_sims: default_truth_sims(),
            p_modes: default_p_modes(),
            selectors: default_selectors(),
            bulk_families: default_families(),
            seed,
            fit_mode: FitMode::default(),
        }
    }

    /// Parses and validates a TOML config.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema != 1 {
            return bad(format!("unsupported schema {}, expected 1", self.schema));
        }
        if !Family::BULK.contains(&self.true_family) {
            return bad(format!("true_family must be a bulk family, got {}", self.true_family));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0,1), got {}", self.gamma));
        }
        if self.n < 2 {
            return bad("n must be at least 2".into());
        }
        if self.replications == 0 {
            return bad("replications must be positive".into());
        }
        if self.eps.is_empty() || self.p_modes.is_empty() || self.selectors.is_empty() {
            return bad("eps, p_mode and selectors must be non-empty".into());
        }
        if self.p_modes.contains(&PMode::Mixing) {
            return bad("p_mode `mixing` is reserved for m7".into());
        }
        if self.bulk_families.iter().any(|f| !Family::BULK.contains(f)) {
            return bad("bulk_families may only contain gamma, lognormal, weibull, loggamma".into());
        }
        let lowest = self.eps.iter().copied().fold(f64::INFINITY, f64::min);
        for m in [self.sims, self.truth_sims] {
            crate::reserve::quantile_index(m, lowest)?;
        }
        crate::reserve::ReserveQuery::new(self.lambda, lowest, self.sims, 0)?;
        self.true_model().map(|_| ())
    }

    pub fn true_bulk(&self) -> Result<DistributionSpec> {
        let [a, b] = self.true_params.unwrap_or_else(|| reference_params(self.true_family));
        DistributionSpec::new(self.true_family, a, b)
    }

    /// True composite model: true bulk below its `(1-γ)` quantile, Pareto excesses, `p = 1-γ`.
    pub fn true_model(&self) -> Result<CompositeModel> {
        let bulk = self.true_bulk()?;
        let b = bulk.quantile(1.0 - self.gamma)?;
        let tail = DistributionSpec::pareto2(self.tail[0], self.tail[1])?;
        CompositeModel::new(bulk, tail, b, 1.0 - self.gamma, PMode::Theoretical)
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Cells in report order: selector × bulk family × p-mode, with M7 as a single lognormal cell.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &selector in &self.selectors {
            if selector == Method::M7 {
                continue;
            }
            for &bulk in &self.bulk_families {
                for &p_mode in &self.p_modes {
                    out.push(Cell { selector, bulk, p_mode });
                }
            }
        }
        if self.selectors.contains(&Method::M7) {
            out.push(Cell { selector: Method::M7, bulk: Family::LogNormal, p_mode: PMode::Mixing });
        }
        out
    }
}

/// One (selector, bulk family, p-mode) combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub selector: Method,
    pub bulk: Family,
    pub p_mode: PMode,
}

/// Reserves of the true model, one per configured `eps`.
pub fn true_reserve(config: &ExperimentConfig) -> Result<Vec<f64>> {
    let model = config.true_model()?;
    let seed = derive_seed(config.seed, Purpose::Truth, 0, 0);
    Ok(estimate_reserves(&model, config.lambda, &config.eps, config.truth_sims, seed)?.into_iter().map(|e| e.q_hat).collect())
}

/// Draws `n` claims from `model`, splitting the count binomially between bulk and tail.
pub fn draw_sample<R: Rng + ?Sized>(model: &CompositeModel, n: usize, rng: &mut R) -> Vec<f64> {
    let sampler = model.sampler();
    let p = model.p_below();
    let n_below = if p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n as u64, p).expect("p in (0,1)").sample(rng) as usize
    };
    let mut out = Vec::with_capacity(n);
    out.extend((0..n_below).map(|_| sampler.bulk_one(rng)));
    out.extend((n_below..n).map(|_| sampler.tail_one(rng)));
    out
}

/// Outcome of one cell in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellOutcome {
    Estimate {
        b_hat: f64,
        p_below: f64,
        /// One reserve per configured `eps`.
        q_hat: Vec<f64>,
    },
    Failed {
        kind: String,
        message: String,
    },
}

impl CellOutcome {
    fn failed(e: &Error) -> Self {
        CellOutcome::Failed { kind: e.kind().into(), message: e.to_string() }
    }
}

/// Draws the sample of replicate `replicate` and evaluates every cell on it.
pub fn run_replication(config: &ExperimentConfig, replicate: u64) -> Result<Vec<CellOutcome>> {
    let truth = config.true_model()?;
    let mut rng = substream(config.seed, Purpose::Sample, replicate, 0);
    let sample = draw_sample(&truth, config.n, &mut rng);
    evaluate_sample(config, sample, replicate)
}

/// Runs every cell of `config` on a given sample; failures are recorded per cell.
pub fn evaluate_sample(config: &ExperimentConfig, sample: Vec<f64>, replicate: u64) -> Result<Vec<CellOutcome>> {
    let sample = SortedSample::new(sample)?;
    let cells = config.cells();
    let mut by_selector: BTreeMap<Method, Result<Vec<Option<CompositeModel>>>> = BTreeMap::new();
    let mut out = Vec::with_capacity(cells.len());
    for (j, cell) in cells.iter().enumerate() {
        let model = if cell.selector == Method::M7 {
            fit_scollnik(&sample).and_then(|f| composite_from_scollnik(&f))
        } else {
            let fits = by_selector.entry(cell.selector).or_insert_with(|| fit_for_selector(config, &sample, cell.selector));
            match fits {
                Ok(models) => {
                    let k = config.bulk_families.iter().position(|f| *f == cell.bulk).expect("cell family");
                    let pm = config.p_modes.iter().position(|p| *p == cell.p_mode).expect("cell p-mode");
                    models[k * config.p_modes.len() + pm]
                        .clone()
                        .ok_or_else(|| Error::EstimationFailed(format!("{} {} fit failed", cell.selector, cell.bulk)))
                }
                Err(e) => Err(e.clone()),
            }
        };
        let outcome = model.and_then(|m| {
            let seed = derive_seed(config.seed, Purpose::Reserve, replicate, j as u64);
            let est = estimate_reserves(&m, config.lambda, &config.eps, config.sims, seed)?;
            Ok(CellOutcome::Estimate {
                b_hat: m.threshold(),
                p_below: m.p_below(),
                q_hat: est.into_iter().map(|e| e.q_hat).collect(),
            })
        });
        out.push(outcome.unwrap_or_else(|e| CellOutcome::failed(&e)));
    }
    Ok(out)
}

/// Models for every (bulk family, p-mode) pair of one selector, in config order;
/// `None` where the fit failed.
fn fit_for_selector(config: &ExperimentConfig, sample: &SortedSample, method: Method) -> Result<Vec<Option<CompositeModel>>> {
    let est = select(sample, method)?;
    let b = est.b_hat;
    let tail = fit_pareto_tail(&sample.excesses(b), b)?;
    let mut out = Vec::new();
    for &family in &config.bulk_families {
        let bulk = fit_bulk(sample.below(b), family, b, config.fit_mode);
        for &p_mode in &config.p_modes {
            let model = bulk.as_ref().ok().and_then(|bulk| {
                let p = match p_mode {
                    PMode::Empirical => Ok(p_below_empirical(sample, b)),
                    _ => p_below_theoretical(bulk, b),
                };
                p.and_then(|p| build_composite(bulk, &tail, p, p_mode)).ok()
            });
            out.push(model);
        }
    }
    Ok(out)
}

/// Bias and RMSE of one cell at one `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub eps: f64,
    /// `None` when no replicate succeeded.
    pub bias: Option<f64>,
    pub rmse: Option<f64>,
    pub successes: usize,
    pub failure_count: usize,
    /// Successful replicates whose fitted `p_below` fell under [`LOW_P`].
    pub low_p_count: usize,
    pub mean_b_hat: Option<f64>,
}

/// Bias `mean(q̂ - q)` and RMSE `sqrt(mean((q̂ - q)²))`.
///
/// The RMSE is evaluated as `sqrt(bias² + mean((q̂ - q - bias)²))`, which is the
/// same quantity but guarantees `rmse >= |bias|` in floating point.
pub fn bias_rmse(estimates: &[f64], truth: f64) -> Option<(f64, f64)> {
    if estimates.is_empty() {
        return None;
    }
    let n = estimates.len() as f64;
    let bias = estimates.iter().map(|q| q - truth).sum::<f64>() / n;
    let var = estimates.iter().map(|q| (q - truth - bias).powi(2)).sum::<f64>() / n;
    Some((bias, (bias * bias + var).sqrt()))
}

/// Study output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_digest: String,
    pub config: ExperimentConfig,
    /// Reserve of the true model, one per `eps`.
    pub true_reserve: Vec<f64>,
    pub cells: Vec<CellSummary>,
}

/// Aggregates replicate outcomes (indexed by replicate) into per-cell bias and RMSE.
pub fn summarize(config: &ExperimentConfig, true_reserve: &[f64], outcomes: &[Vec<CellOutcome>]) -> ExperimentResult {
    let cells = config.cells();
    let mut summaries = Vec::new();
    for (e, (&eps, &truth)) in config.eps.iter().zip(true_reserve).enumerate() {
        for (j, &cell) in cells.iter().enumerate() {
            let mut q = Vec::new();
            let mut b_sum = 0.0;
            let mut low_p = 0;
            let mut failures = 0;
            for rep in outcomes {
                match &rep[j] {
                    CellOutcome::Estimate { b_hat, p_below, q_hat } => {
                        q.push(q_hat[e]);
                        b_sum += b_hat;
                        low_p += usize::from(*p_below < LOW_P);
                    }
                    CellOutcome::Failed { .. } => failures += 1,
                }
            }
            let br = bias_rmse(&q, truth);
            summaries.push(CellSummary {
                cell,
                eps,
                bias: br.map(|x| x.0),
                rmse: br.map(|x| x.1),
                successes: q.len(),
                failure_count: failures,
                low_p_count: low_p,
                mean_b_hat: (!q.is_empty()).then(|| b_sum / q.len() as f64),
            });
        }
    }
    ExperimentResult {
        config_digest: config.digest(),
        config: config.clone(),
        true_reserve: true_reserve.to_vec(),
        cells: summaries,
    }
}

/// Runs the whole experiment on a pool of `workers` threads (`0` = rayon default).
pub fn run_study(config: &ExperimentConfig, workers: usize) -> Result<ExperimentResult> {
    config.validate()?;
    crate::reserve::with_workers(workers, || {
        let truth = true_reserve(config)?;
        let outcomes =
            (0..config.replications as u64).into_par_iter().map(|i| run_replication(config, i)).collect::<Result<Vec<_>>>()?;
        Ok(summarize(config, &truth, &outcomes))
    })?
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl ExperimentResult {
    pub fn cell(&self, selector: Method, bulk: Family, p_mode: PMode, eps: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.cell == Cell { selector, bulk, p_mode } && c.eps == eps)
    }

    /// One row per cell and `eps`, comma separated, with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "config_digest,true_family,selector,bulk,p_mode,eps,true_reserve,bias,rmse,successes,failures,low_p,mean_b_hat\n",
        );
        for c in &self.cells {
            let e = self.config.eps.iter().position(|&x| x == c.eps).expect("eps");
            writeln!(
                s,
                "{},{},{},{},{},{},{:.6},{},{},{},{},{},{}",
                self.config_digest,
                self.config.true_family,
                c.cell.selector,
                c.cell.bulk,
                c.cell.p_mode,
                c.eps,
                self.true_reserve[e],
                opt(c.bias),
                opt(c.rmse),
                c.successes,
                c.failure_count,
                c.low_p_count,
                opt(c.mean_b_hat)
            )
            .unwrap();
        }
        s
    }

    /// Aligned text: for every `eps` and p-mode, a bias block and an RMSE block with
    /// one row per bulk family and one column per selector.
    pub fn to_text(&self) -> String {
        let cfg = &self.config;
        let bulk = cfg.true_bulk().expect("validated");
        let mut s = String::new();
        writeln!(
            s,
            "true model {} ({}, {}) + Pareto({}, {}), gamma {}, n {}, lambda {}, N {}, m {}",
            cfg.true_family.label(),
            bulk.param1(),
            bulk.param2(),
            cfg.tail[0],
            cfg.tail[1],
            cfg.gamma,
            cfg.n,
            cfg.lambda,
            cfg.replications,
            cfg.sims
        )
        .unwrap();
        writeln!(s, "config digest {}", self.config_digest).unwrap();
        let selectors: Vec<Method> = cfg.selectors.clone();
        for (e, &eps) in cfg.eps.iter().enumerate() {
            for &p_mode in &cfg.p_modes {
                writeln!(s, "\neps {eps}  p {p_mode}  true reserve {:.2}", self.true_reserve[e]).unwrap();
                for (title, pick) in [("bias", 0), ("rmse", 1)] {
                    write!(s, "{title:<10}").unwrap();
                    for m in &selectors {
                        write!(s, "{:>12}", m.tag().to_uppercase()).unwrap();
                    }
                    s.push('\n');
                    let value = |c: Option<&CellSummary>| c.and_then(|c| if pick == 0 { c.bias } else { c.rmse });
                    let put = |s: &mut String, v: Option<f64>| match v {
                        Some(v) => write!(s, "{v:>12.2}").unwrap(),
                        None => write!(s, "{:>12}", "-").unwrap(),
                    };
                    for &family in &cfg.bulk_families {
                        write!(s, "{:<10}", family.label()).unwrap();
                        for &m in &selectors {
                            let v = if m == Method::M7 { None } else { value(self.cell(m, family, p_mode, eps)) };
                            put(&mut s, v);
                        }
                        s.push('\n');
                    }
                    // the simultaneous fit has its own lognormal row
                    if selectors.contains(&Method::M7) {
                        write!(s, "{:<10}", format!("{}*", Family::LogNormal.label())).unwrap();
                        for &m in &selectors {
                            let v =
                                if m == Method::M7 { value(self.cell(m, Family::LogNormal, PMode::Mixing, eps)) } else { None };
                            put(&mut s, v);
                        }
                        s.push('\n');
                    }
                }
            }
        }
        let flagged: Vec<&CellSummary> = self.cells.iter().filter(|c| c.failure_count > 0 || c.low_p_count > 0).collect();
        if !flagged.is_empty() {
            s.push_str("\nflags\n");
            for c in flagged {
                writeln!(
                    s,
                    "{} {} {} eps {}: {} failed, {} with p_below < {LOW_P}",
                    c.cell.selector, c.cell.bulk, c.cell.p_mode, c.eps, c.failure_count, c.low_p_count
                )
                .unwrap();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(Family::Gamma, 0.08, 300, 50.0, vec![0.05, 0.01], seed);
        c.replications = 6;
        c.sims = 2_000;
        c.truth_sims = 20_000;
        c.selectors = vec![Method::M1, Method::M2, Method::M3];
        c.bulk_families = vec![Family::Gamma, Family::Weibull];
        c.p_modes = vec![PMode::Empirical, PMode::Theoretical];
        c
    }

    #[test]
    fn bias_and_rmse_formulas() {
        let (b, r) = bias_rmse(&[13.0, 13.0, 13.0], 10.0).unwrap();
        assert_eq!((b, r), (3.0, 3.0));
        let (b, r) = bias_rmse(&[8.0, 12.0], 10.0).unwrap();
        assert_eq!((b, r), (0.0, 2.0));
        assert!(bias_rmse(&[], 1.0).is_none());
    }

    #[test]
    fn config_parses_with_aliases_and_defaults() {
        let text = r#"
            schema = 1
            true_family = "weibull"
            gamma = 0.04
            n = 500
            lambda = 500
            eps = 0.01
            N = 10
            m = 5000
            p_mode = "theoretical"
            selectors = ["m2", "m7"]
            seed = 7
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!((c.replications, c.sims, c.eps.clone()), (10, 5000, vec![0.01]));
        assert_eq!(c.p_modes, vec![PMode::Theoretical]);
        assert_eq!(c.bulk_families, Family::BULK.to_vec());
        assert_eq!(c.true_bulk().unwrap(), DistributionSpec::weibull(2.0, 11.28).unwrap());
        let again = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.digest(), c.digest());
        assert_eq!(c.cells().len(), 4 + 1);
        assert!(ExperimentConfig::from_toml(&text.replace("schema = 1", "schema = 2")).is_err());
        assert!(ExperimentConfig::from_toml(&text.replace("seed = 7", "seed = 7\nbogus = 1")).is_err());
        assert!(ExperimentConfig::from_toml(&text.replace("m = 5000", "m = 50")).is_err());
    }

    #[test]
    fn true_model_places_threshold_at_quantile() {
        let c = small(1);
        let m = c.true_model().unwrap();
        assert!((m.cdf(m.threshold()).unwrap() - 0.92).abs() < 1e-12);
        assert!((m.bulk().cdf(m.threshold()).unwrap() - 0.92).abs() < 1e-10);
    }

    #[test]
    fn pure_pareto_limit_dominates() {
        let mut c = small(3);
        c.truth_sims = 200_000;
        c.eps = vec![0.01];
        let base = true_reserve(&c).unwrap()[0];
        let pure = c.true_model().unwrap().with_p_below(0.0).unwrap();
        let q = estimate_reserves(&pure, 50.0, &[0.01], 200_000, 5).unwrap()[0].q_hat;
        assert!(q > base, "{q} <= {base}");
    }

    #[test]
    fn study_is_deterministic_across_worker_counts() {
        let c = small(11);
        let one = run_study(&c, 1).unwrap();
        for w in [2, 8] {
            assert_eq!(run_study(&c, w).unwrap().to_csv(), one.to_csv());
        }
        for cell in &one.cells {
            if let (Some(b), Some(r)) = (cell.bias, cell.rmse) {
                assert!(r >= b.abs());
            }
            assert_eq!(cell.successes + cell.failure_count, c.replications);
        }
        let text = one.to_text();
        assert!(text.contains("Ga.-P.") && text.contains("We.-P.") && text.contains(&one.config_digest));
        assert_eq!(one.to_csv().lines().count(), 1 + 2 * 3 * 2 * 2);
    }

    #[test]
    fn heuristic_cells_scale_with_the_data() {
        let c = small(21);
        let mut scaled = c.clone();
        let k = 3.5;
        scaled.true_params = Some([10.0, k]);
        scaled.tail = [2.5, 75.0 * k];
        for rep in 0..2 {
            let a = run_replication(&c, rep).unwrap();
            let b = run_replication(&scaled, rep).unwrap();
            for (x, y) in a.iter().zip(&b) {
                match (x, y) {
                    (
                        CellOutcome::Estimate { b_hat: b1, q_hat: q1, p_below: p1 },
                        CellOutcome::Estimate { b_hat: b2, q_hat: q2, p_below: p2 },
                    ) => {
                        assert!((b2 / b1 / k - 1.0).abs() < 1e-8);
                        assert!((p1 - p2).abs() < 1e-6);
                        for (u, v) in q1.iter().zip(q2) {
                            assert!((v / u / k - 1.0).abs() < 1e-5, "{u} {v}");
                        }
                    }
                    (CellOutcome::Failed { .. }, CellOutcome::Failed { .. }) => {}
                    other => panic!("outcomes differ: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn failed_selection_voids_only_its_cells() {
        let mut c = small(2);
        c.n = 15;
        c.selectors = vec![Method::M1, Method::M2];
        c.bulk_families = vec![Family::Gamma];
        c.p_modes = vec![PMode::Empirical];
        let out = run_replication(&c, 0).unwrap();
        // n = 15: M1 leaves a single exceedance, too few for the tail fit;
        // M2 leaves four
        assert!(matches!(&out[0], CellOutcome::Failed { kind, .. } if kind == "insufficient_data"));
        assert!(matches!(out[1], CellOutcome::Estimate { .. }));
        let r = summarize(&c, &[1.0, 1.0], &[out]);
        assert_eq!((r.cells[0].successes, r.cells[0].failure_count, r.cells[0].bias), (0, 1, None));
        assert_eq!((r.cells[1].successes, r.cells[1].failure_count), (1, 0));
    }

    #[test]
    fn small_samples_flag_near_zero_weights() {
        // with 50 claims the theoretical weight of a poorly fitted bulk can collapse
        let mut c = ExperimentConfig::new(Family::Weibull, 0.08, 50, 50.0, vec![0.01], 4);
        c.replications = 30;
        c.sims = 1_000;
        c.truth_sims = 10_000;
        c.selectors = vec![Method::M3, Method::M5];
        c.bulk_families = vec![Family::Gamma, Family::LogNormal, Family::Weibull];
        c.p_modes = vec![PMode::Empirical, PMode::Theoretical];
        let r = run_study(&c, 1).unwrap();
        let low = |p: PMode| r.cells.iter().filter(|x| x.cell.p_mode == p).map(|x| x.low_p_count).sum::<usize>();
        assert_eq!(low(PMode::Empirical), 0);
        assert!(low(PMode::Theoretical) > 0);
        assert!(r.to_text().contains("with p_below < 0.1"));
    }
}
