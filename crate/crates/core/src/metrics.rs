//! Rank statistics, value-order correlation and dataset aggregation.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::parser::ResponseStatus;
use crate::sampler::Permutation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("need at least 2 values, got {0}")]
    TooShort(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("input is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum RankMethod {
    #[default]
    Spearman,
    Kendall,
}

/// A correlation coefficient. `degenerate` is set when one side has no
/// variation at all; the value is then defined as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub degenerate: bool,
}

impl Correlation {
    fn degenerate() -> Self {
        Self {
            value: 0.0,
            degenerate: true,
        }
    }

    fn clamped(value: f64) -> Self {
        Self {
            value: value.clamp(-1.0, 1.0),
            degenerate: false,
        }
    }
}

/// Ranks `1..=n`; tied values share the mean of the positions they span.
pub fn fractional_ranks(x: &[f64]) -> Result<Vec<f64>, MetricError> {
    if x.is_empty() {
        return Err(MetricError::Empty);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut ranks = alloc::vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end, averaged
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    Ok(ranks)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooShort(x.len()));
    }
    Ok(())
}

/// Spearman's rho: Pearson correlation of the fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation, MetricError> {
    check_pair(x, y)?;
    let rx = fractional_ranks(x)?;
    let ry = fractional_ranks(y)?;
    Ok(pearson(&rx, &ry))
}

fn pearson(x: &[f64], y: &[f64]) -> Correlation {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Correlation::degenerate();
    }
    Correlation::clamped(sxy / libm::sqrt(sxx * syy))
}

/// Kendall's tau-b, computed in O(n log n) by counting the swaps of a merge
/// sort (Knight's algorithm).
pub fn kendall(x: &[f64], y: &[f64]) -> Result<Correlation, MetricError> {
    check_pair(x, y)?;
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let n = x.len();
    let cmp = |a: f64, b: f64| a.partial_cmp(&b).unwrap_or(Ordering::Equal);

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| cmp(x[a], x[b]).then(cmp(y[a], y[b])));

    let pairs = |t: u64| t * (t.saturating_sub(1)) / 2;
    let total = pairs(n as u64);

    // pairs tied in x, and pairs tied in both
    let (mut tied_x, mut tied_xy) = (0u64, 0u64);
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in 1..n {
        let (a, b) = (idx[w - 1], idx[w]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                tied_xy += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            tied_x += pairs(run_x);
            tied_xy += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    tied_x += pairs(run_x);
    tied_xy += pairs(run_xy);

    let keys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let swaps = merge_sort_swaps(keys.clone(), &cmp);
    let mut sorted_y = keys;
    sorted_y.sort_by(|a, b| cmp(*a, *b));

    let mut tied_y = 0u64;
    let mut run_y = 1u64;
    for w in 1..n {
        if sorted_y[w - 1] == sorted_y[w] {
            run_y += 1;
        } else {
            tied_y += pairs(run_y);
            run_y = 1;
        }
    }
    tied_y += pairs(run_y);

    let denom_x = total - tied_x;
    let denom_y = total - tied_y;
    if denom_x == 0 || denom_y == 0 {
        return Ok(Correlation::degenerate());
    }
    let numerator =
        total as f64 - tied_x as f64 - tied_y as f64 + tied_xy as f64 - 2.0 * swaps as f64;
    Ok(Correlation::clamped(
        numerator / libm::sqrt(denom_x as f64 * denom_y as f64),
    ))
}

/// Number of inversions removed by a stable merge sort; equal keys never count.
fn merge_sort_swaps(mut v: Vec<f64>, cmp: &impl Fn(f64, f64) -> Ordering) -> u64 {
    let n = v.len();
    let mut buf = v.clone();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if cmp(v[j], v[i]) == Ordering::Less {
                    buf[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    buf[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + (hi - j)].copy_from_slice(&v[j..hi]);
            lo = hi;
        }
        core::mem::swap(&mut v, &mut buf);
        width *= 2;
    }
    swaps
}

/// Value-order correlation: rank correlation between predictions in temporal
/// order and the index sequence `1..=n`.
pub fn voc(predictions_temporal: &[f64], method: RankMethod) -> Result<Correlation, MetricError> {
    let index: Vec<f64> = (1..=predictions_temporal.len()).map(|i| i as f64).collect();
    match method {
        RankMethod::Spearman => spearman(predictions_temporal, &index),
        RankMethod::Kendall => kendall(predictions_temporal, &index),
    }
}

/// Outcome for one evaluated episode.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeResult {
    pub episode_index: u64,
    pub status: ResponseStatus,
    /// Present iff `status` is `Ok`.
    pub voc: Option<f64>,
    pub degenerate: bool,
    /// Predictions for the evaluated frames, restored to temporal order.
    pub predictions_temporal: Vec<f64>,
    /// Timesteps of the evaluated frames in temporal order.
    pub frame_timesteps: Vec<u32>,
    pub permutation: Permutation,
    /// Shuffle seed of the evaluated selection.
    pub seed: u64,
    pub raw_text: String,
    /// Transport or other failure recorded instead of a response.
    pub note: Option<String>,
}

/// Summary matching one row of a results table.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AggregateStats {
    pub n_ok: usize,
    pub voc_mean: Option<f64>,
    pub voc_std: Option<f64>,
    pub voc_stderr: Option<f64>,
    pub n_mismatch: usize,
    pub n_empty: usize,
}

impl AggregateStats {
    pub fn total(&self) -> usize {
        self.n_ok + self.n_mismatch + self.n_empty
    }
}

/// Standard error of the mean, `std / sqrt(n)`.
pub fn standard_error(std: f64, n: usize) -> f64 {
    std / libm::sqrt(n as f64)
}

/// Mean, sample standard deviation (divisor `n - 1`) and standard error over the
/// ok episodes; mismatches and empties are only counted. A single ok episode
/// reports a standard deviation of 0.
pub fn aggregate(results: &[EpisodeResult]) -> AggregateStats {
    let vocs: Vec<f64> = results
        .iter()
        .filter(|r| r.status == ResponseStatus::Ok)
        .filter_map(|r| r.voc)
        .collect();
    let count = |s| results.iter().filter(|r| r.status == s).count();
    let mut stats = AggregateStats {
        n_ok: vocs.len(),
        n_mismatch: count(ResponseStatus::Mismatch),
        n_empty: count(ResponseStatus::Empty),
        ..AggregateStats::default()
    };
    if let Some((mean, std)) = mean_and_sample_std(&vocs) {
        stats.voc_mean = Some(mean);
        stats.voc_std = Some(std);
        stats.voc_stderr = Some(standard_error(std, vocs.len()));
    }
    stats
}

pub(crate) fn mean_and_sample_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((mean, libm::sqrt(ss / (n - 1.0))))
}
