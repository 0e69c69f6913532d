//! Monte Carlo reserves of the compound-Poisson aggregate loss
//! `X = Z_1 + ... + Z_N`, `N ~ Poisson(λ)`.
//!
//! Each simulated period draws `N*`, splits it binomially into claims at or
//! below the threshold and claims above it, and sums truncated-bulk draws and
//! shifted Pareto draws. The reserve `q_ε` is the order statistic of the `m`
//! simulated losses at index `round((1-ε)m)`.
//!
//! Simulations are generated in fixed-size chunks; chunk `c` uses the ChaCha8
//! stream `c` of the query seed, so the output does not depend on how many
//! worker threads share the chunks.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composite::{CompositeModel, CompositeSampler};
use crate::rng::partition;
use crate::{Error, Result};

/// Simulations per generator stream.
pub const CHUNK: usize = 1 << 14;

/// A reserve request: expected claim count, tail probability, simulation count and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReserveQuery {
    pub lambda: f64,
    pub eps: f64,
    pub m: usize,
    pub seed: u64,
}

impl ReserveQuery {
    pub fn new(lambda: f64, eps: f64, m: usize, seed: u64) -> Result<Self> {
        let q = Self { lambda, eps, m, seed };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        quantile_index(self.m, self.eps).map(|_| ())
    }
}

/// A simulated reserve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReserveEstimate {
    pub q_hat: f64,
    pub query: ReserveQuery,
    /// 1-based index of `q_hat` among the sorted simulated losses.
    pub index: usize,
    /// Digest of the model record the losses were drawn from.
    pub model_digest: String,
}

/// 1-based order-statistic index `round((1-ε)m)` clamped to `[1, m]`.
pub fn quantile_index(m: usize, eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0,1), got {eps}")));
    }
    if (m as f64) * eps < 1.0 - 1e-9 {
        return Err(Error::Resolution(format!(
            "m = {m} simulations cannot resolve eps = {eps}; need m >= {}",
            (1.0 / eps).ceil()
        )));
    }
    let idx = ((1.0 - eps) * m as f64).round();
    Ok((idx as usize).clamp(1, m))
}

/// Claim-count generator for one period.
#[derive(Debug, Clone, Copy)]
struct ClaimCount(Poisson<f64>);

impl ClaimCount {
    fn new(lambda: f64) -> Result<Self> {
        Poisson::new(lambda).map(ClaimCount).map_err(|e| Error::InvalidParameter(format!("poisson rate {lambda}: {e}")))
    }
}

fn one_period<R: Rng + ?Sized>(sampler: &CompositeSampler, count: &ClaimCount, rng: &mut R) -> f64 {
    let n_total = count.0.sample(rng) as u64;
    if n_total == 0 {
        return 0.0;
    }
    let p = sampler.p_below();
    let n_below = match p {
        p if p <= 0.0 => 0,
        p if p >= 1.0 => n_total,
        p => Binomial::new(n_total, p).expect("p in (0,1)").sample(rng),
    };
    let mut x = 0.0;
    for _ in 0..n_below {
        x += sampler.bulk_one(rng);
    }
    for _ in n_below..n_total {
        x += sampler.tail_one(rng);
    }
    x
}

/// One realisation of the aggregate loss over a period with `Poisson(λ)` claims.
pub fn aggregate_loss_sample<R: Rng + ?Sized>(sampler: &CompositeSampler, lambda: f64, rng: &mut R) -> Result<f64> {
    Ok(one_period(sampler, &ClaimCount::new(lambda)?, rng))
}

/// `m` aggregate losses in chunk order, generated on the current rayon pool.
pub fn simulate_aggregate_losses(model: &CompositeModel, lambda: f64, m: usize, seed: u64) -> Result<Vec<f64>> {
    let count = ClaimCount::new(lambda)?;
    let sampler = model.sampler();
    let mut out = vec![0.0; m];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let mut rng = partition(seed, c as u64);
        for x in chunk.iter_mut() {
            *x = one_period(&sampler, &count, &mut rng);
        }
    });
    Ok(out)
}

/// Runs `f` on a thread pool of `workers` threads (`0`: one per available core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Reserve for one query.
pub fn estimate_reserve(model: &CompositeModel, query: &ReserveQuery) -> Result<ReserveEstimate> {
    let mut all = estimate_reserves(model, query.lambda, &[query.eps], query.m, query.seed)?;
    Ok(all.remove(0))
}

/// Reserves for several tail probabilities from one shared set of `m` simulated losses.
pub fn estimate_reserves(model: &CompositeModel, lambda: f64, eps: &[f64], m: usize, seed: u64) -> Result<Vec<ReserveEstimate>> {
    let queries = eps.iter().map(|&e| ReserveQuery::new(lambda, e, m, seed)).collect::<Result<Vec<_>>>()?;
    let mut losses = simulate_aggregate_losses(model, lambda, m, seed)?;
    let digest = model.digest();
    Ok(queries
        .into_iter()
        .map(|query| {
            let index = quantile_index(m, query.eps).expect("validated");
            let q_hat = order_statistic(&mut losses, index);
            ReserveEstimate { q_hat, query, index, model_digest: digest.clone() }
        })
        .collect())
}

/// `x_(index)` (1-based) by selection; reorders `values`.
pub fn order_statistic(values: &mut [f64], index: usize) -> f64 {
    *values.select_nth_unstable_by(index - 1, f64::total_cmp).1
}
