use super::{Method, SortedSample, ThresholdEstimate};
use crate::{Error, Result};

/// Variance used to normalise the sequential Mann–Kendall sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MkVariance {
    /// `i(i+1)(2i+5)/72`.
    #[default]
    AsPrinted,
    /// The classical `i(i-1)(2i+5)/72`.
    Classical,
}

impl MkVariance {
    fn var(self, i: usize) -> f64 {
        let i = i as f64;
        match self {
            MkVariance::AsPrinted => i * (i + 1.0) * (2.0 * i + 5.0) / 72.0,
            MkVariance::Classical => i * (i - 1.0) * (2.0 * i + 5.0) / 72.0,
        }
    }
}

/// Fenwick tree counting inserted ranks.
struct Counter(Vec<u32>);

impl Counter {
    fn new(n: usize) -> Self {
        Counter(vec![0; n + 1])
    }

    fn insert(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks strictly below `rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut s = 0u64;
        while i > 0 {
            s += self.0[i] as u64;
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Sequential Mann–Kendall series of `x`: element `i-1` holds `U_i` for
/// `i = 1..=len`, where `n_k` counts earlier-or-equal positions `j <= k` with
/// `x_j < x_k` (ties count zero). `O(len log len)`.
fn mk_series(x: &[f64], variance: MkVariance) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    // dense ranks: equal values share a rank
    let mut rank = vec![0usize; x.len()];
    let mut r = 0;
    for w in 0..order.len() {
        if w > 0 && x[order[w]] != x[order[w - 1]] {
            r += 1;
        }
        rank[order[w]] = r;
    }
    let mut counter = Counter::new(r + 1);
    let mut total = 0u64;
    x.iter()
        .enumerate()
        .map(|(k, _)| {
            total += counter.below(rank[k]);
            counter.insert(rank[k]);
            let i = k + 1;
            let sd = variance.var(i).sqrt();
            let centred = total as f64 - (i * (i - 1)) as f64 / 4.0;
            if sd > 0.0 {
                centred / sd
            } else {
                0.0
            }
        })
        .collect()
}

/// Progressive series `U` and the aligned retrograde series `Ũ` over the
/// differences `d_i = z_(i+1) - z_(i)`, `i = 1..n-1` (element `i-1`).
///
/// The retrograde series is computed on the reversed differences, mapped back
/// to the position of the difference it ends at, and negated as in the
/// classical sequential test so that a change point shows as a crossing.
pub fn gertensgarbe_series(sample: &SortedSample, variance: MkVariance) -> (Vec<f64>, Vec<f64>) {
    let v = sample.values();
    let d: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    let prog = mk_series(&d, variance);
    let rev: Vec<f64> = d.iter().rev().copied().collect();
    let mut retro = mk_series(&rev, variance);
    retro.reverse();
    for x in &mut retro {
        *x = -*x;
    }
    (prog, retro)
}

/// Every sign change of `U - Ũ`, scanning upward, as 1-based positions. Each
/// crossing between `i-1` and `i` resolves to whichever side is closer to zero.
pub(crate) fn crossings<'a>(prog: &'a [f64], retro: &'a [f64]) -> impl Iterator<Item = usize> + 'a {
    let diff = move |i: usize| prog[i - 1] - retro[i - 1];
    (2..=prog.len()).filter_map(move |i| {
        let (a, b) = (diff(i - 1), diff(i));
        let changes = (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0);
        changes.then(|| if a.abs() <= b.abs() { i - 1 } else { i })
    })
}

/// M6: change point of the sorted-data differences.
///
/// The threshold is `z_(c)` where `c` is the crossing position, so the
/// difference `z_(c+1) - z_(c)` is the first one in the extreme regime.
pub fn select_gertensgarbe(sample: &SortedSample, variance: MkVariance) -> Result<ThresholdEstimate> {
    let n = sample.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!("gertensgarbe needs n >= 10, got {n}")));
    }
    let (prog, retro) = gertensgarbe_series(sample, variance);
    let c = crossings(&prog, &retro)
        .next()
        .ok_or_else(|| Error::NoThresholdFound("gertensgarbe: progressive and retrograde series never cross".into()))?;
    Ok(ThresholdEstimate { method: Method::M6, k: (n - c) as f64, index: c, b_hat: sample.order_stat(c), warning: None })
}
