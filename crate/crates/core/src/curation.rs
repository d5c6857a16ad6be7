//! Dataset-level quality bands, per-episode outlier flags and curation hints.
//!
//! Hints are heuristics layered on the scores. They never remove data.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::metrics::{aggregate, mean_and_sample_std, AggregateStats, EpisodeResult};
use crate::parser::ResponseStatus;

pub const MODERATE_THRESHOLD: f64 = 0.4;
pub const STRONG_THRESHOLD: f64 = 0.7;
pub const DEFAULT_OUTLIER_K: f64 = 2.0;
/// Minimum number of ok episodes for statistical outlier flags.
pub const MIN_OK_FOR_STATS: usize = 3;
/// Share of mismatched or empty replies treated as high.
pub const HIGH_FAILURE_RATE: f64 = 0.2;
/// Largest share of ok episodes still counted as "isolated" outliers.
pub const ISOLATED_OUTLIER_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum QualityBand {
    Weak,
    Moderate,
    Strong,
}

impl QualityBand {
    pub fn from_mean(voc_mean: f64) -> Self {
        if voc_mean >= STRONG_THRESHOLD {
            QualityBand::Strong
        } else if voc_mean >= MODERATE_THRESHOLD {
            QualityBand::Moderate
        } else {
            QualityBand::Weak
        }
    }
}

impl fmt::Display for QualityBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QualityBand::Weak => "weak",
            QualityBand::Moderate => "moderate",
            QualityBand::Strong => "strong",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CurationError {
    #[error("no ok episodes; dataset cannot be classified")]
    Unclassifiable,
}

pub fn classify_dataset(stats: &AggregateStats) -> Result<QualityBand, CurationError> {
    match stats.voc_mean {
        Some(mean) if stats.n_ok >= 1 => Ok(QualityBand::from_mean(mean)),
        _ => Err(CurationError::Unclassifiable),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OutlierReason {
    LowVocOutlier,
    Degenerate,
    Mismatch,
    Empty,
}

impl fmt::Display for OutlierReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutlierReason::LowVocOutlier => "low_voc_outlier",
            OutlierReason::Degenerate => "degenerate",
            OutlierReason::Mismatch => "mismatch",
            OutlierReason::Empty => "empty",
        })
    }
}

/// One flagged episode. The statistics are the leave-one-out mean and standard
/// deviation of the other ok episodes; they are absent for unconditional flags
/// or when too few episodes are ok.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OutlierFlag {
    pub episode_index: u64,
    pub voc: Option<f64>,
    pub dataset_mean: Option<f64>,
    pub dataset_std: Option<f64>,
    /// `(voc - dataset_mean) / dataset_std`.
    pub deviation: Option<f64>,
    pub reason: OutlierReason,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutlierScan {
    /// Sorted by episode index, then reason.
    pub flags: Vec<OutlierFlag>,
    /// Set when fewer than [`MIN_OK_FOR_STATS`] episodes were ok, so only the
    /// unconditional flags were produced.
    pub insufficient_data: bool,
}

impl OutlierScan {
    pub fn low_voc(&self) -> impl Iterator<Item = &OutlierFlag> {
        self.flags
            .iter()
            .filter(|f| f.reason == OutlierReason::LowVocOutlier)
    }
}

/// Flags episodes whose VOC sits at least `k` leave-one-out standard deviations
/// below the rest, plus every mismatched, empty or degenerate episode.
///
/// An episode whose peers have zero spread gets no statistical flag, since its
/// deviation is undefined.
pub fn flag_outliers(results: &[EpisodeResult], k: f64) -> OutlierScan {
    let mut flags = Vec::new();
    let ok: Vec<(u64, f64)> = results
        .iter()
        .filter(|r| r.status == ResponseStatus::Ok)
        .filter_map(|r| r.voc.map(|v| (r.episode_index, v)))
        .collect();

    for r in results {
        let reason = match r.status {
            ResponseStatus::Mismatch => Some(OutlierReason::Mismatch),
            ResponseStatus::Empty => Some(OutlierReason::Empty),
            ResponseStatus::Ok if r.degenerate => Some(OutlierReason::Degenerate),
            ResponseStatus::Ok => None,
        };
        if let Some(reason) = reason {
            flags.push(OutlierFlag {
                episode_index: r.episode_index,
                voc: r.voc,
                dataset_mean: None,
                dataset_std: None,
                deviation: None,
                reason,
            });
        }
    }

    let insufficient_data = ok.len() < MIN_OK_FOR_STATS;
    if !insufficient_data {
        // Sort so that floating-point sums do not depend on input order.
        let mut sorted: Vec<f64> = ok.iter().map(|&(_, v)| v).collect();
        sorted.sort_by(f64::total_cmp);
        for &(episode_index, value) in &ok {
            let at = sorted
                .binary_search_by(|probe| probe.total_cmp(&value))
                .expect("value is present");
            let mut others = sorted.clone();
            others.remove(at);
            let Some((mean, std)) = mean_and_sample_std(&others) else {
                continue;
            };
            if std <= 0.0 {
                continue;
            }
            let deviation = (value - mean) / std;
            if deviation <= -k {
                flags.push(OutlierFlag {
                    episode_index,
                    voc: Some(value),
                    dataset_mean: Some(mean),
                    dataset_std: Some(std),
                    deviation: Some(deviation),
                    reason: OutlierReason::LowVocOutlier,
                });
            }
        }
    }

    flags.sort_by(|a, b| {
        a.episode_index
            .cmp(&b.episode_index)
            .then(a.reason.cmp(&b.reason))
    });
    OutlierScan {
        flags,
        insufficient_data,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CurationHint {
    /// Weak band or many unusable replies: the instruction or task setup is
    /// likely ill-posed or ambiguous.
    TaskDefinitionSuspected,
    /// Strong band with a handful of low outliers: those episodes are likely
    /// failed or out-of-distribution demonstrations.
    OodEpisodesSuspected { episodes: Vec<u64> },
}

impl fmt::Display for CurationHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurationHint::TaskDefinitionSuspected => {
                f.write_str("task definition / instruction ambiguity suspected")
            }
            CurationHint::OodEpisodesSuspected { episodes } => {
                f.write_str("OOD episodes suspected: ")?;
                for (i, e) in episodes.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{e}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurationSummary {
    pub stats: AggregateStats,
    pub band: Option<QualityBand>,
    pub outliers: OutlierScan,
    pub hints: Vec<CurationHint>,
    pub text: String,
}

/// Applies the hint rules:
///
/// | condition | hint |
/// |---|---|
/// | weak band, or mismatched+empty share ≥ 20% | task definition |
/// | strong band and 1 ≤ low outliers ≤ max(1, 5% of ok) | OOD episodes |
pub fn curation_summary(results: &[EpisodeResult], k: f64) -> CurationSummary {
    let stats = aggregate(results);
    let band = classify_dataset(&stats).ok();
    let outliers = flag_outliers(results, k);

    let total = stats.total().max(1) as f64;
    let failure_rate = (stats.n_mismatch + stats.n_empty) as f64 / total;
    let low: Vec<u64> = outliers.low_voc().map(|f| f.episode_index).collect();
    let isolated_limit = libm::ceil(stats.n_ok as f64 * ISOLATED_OUTLIER_SHARE).max(1.0) as usize;

    let mut hints = Vec::new();
    if band == Some(QualityBand::Weak) || failure_rate >= HIGH_FAILURE_RATE {
        hints.push(CurationHint::TaskDefinitionSuspected);
    }
    if band == Some(QualityBand::Strong) && !low.is_empty() && low.len() <= isolated_limit {
        hints.push(CurationHint::OodEpisodesSuspected { episodes: low });
    }

    let mut text = match (band, stats.voc_mean) {
        (Some(b), Some(m)) => format!(
            "{b} dataset: mean VOC {m:.4} over {} ok episodes ({} mismatched, {} empty).",
            stats.n_ok, stats.n_mismatch, stats.n_empty
        ),
        _ => format!(
            "unclassifiable: no ok episodes ({} mismatched, {} empty).",
            stats.n_mismatch, stats.n_empty
        ),
    };
    text.push_str(&format!(" {} flagged episode(s).", outliers.flags.len()));
    if outliers.insufficient_data {
        text.push_str(" Fewer than 3 ok episodes: statistical outlier test skipped.");
    }
    for hint in &hints {
        text.push_str(&format!(" Heuristic hint: {hint}."));
    }
    CurationSummary {
        stats,
        band,
        outliers,
        hints,
        text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Permutation;
    use alloc::vec;
    use proptest::prelude::*;

    fn ok(index: u64, voc: f64) -> EpisodeResult {
        EpisodeResult {
            episode_index: index,
            status: ResponseStatus::Ok,
            voc: Some(voc),
            degenerate: false,
            predictions_temporal: Vec::new(),
            frame_timesteps: Vec::new(),
            permutation: Permutation::identity(0),
            seed: 0,
            raw_text: String::new(),
            note: None,
        }
    }

    fn failed(index: u64, status: ResponseStatus) -> EpisodeResult {
        EpisodeResult {
            status,
            voc: None,
            ..ok(index, 0.0)
        }
    }

    fn stats(mean: f64) -> AggregateStats {
        AggregateStats {
            n_ok: 50,
            voc_mean: Some(mean),
            voc_std: Some(0.1),
            voc_stderr: Some(0.01),
            ..AggregateStats::default()
        }
    }

    #[test]
    fn bands() {
        assert_eq!(classify_dataset(&stats(0.9654)), Ok(QualityBand::Strong));
        assert_eq!(classify_dataset(&stats(0.4427)), Ok(QualityBand::Moderate));
        assert_eq!(classify_dataset(&stats(0.1575)), Ok(QualityBand::Weak));
        assert_eq!(classify_dataset(&stats(0.7)), Ok(QualityBand::Strong));
        assert_eq!(classify_dataset(&stats(0.4)), Ok(QualityBand::Moderate));
        assert_eq!(
            classify_dataset(&AggregateStats::default()),
            Err(CurationError::Unclassifiable)
        );
    }

    #[test]
    fn single_planted_outlier() {
        let mut results: Vec<EpisodeResult> = (0..150)
            .map(|i| ok(i, 0.8 + 0.01 * ((i % 7) as f64 - 3.0)))
            .collect();
        results[93] = ok(93, -0.5);
        let scan = flag_outliers(&results, 2.0);
        assert_eq!(scan.flags.len(), 1);
        assert_eq!(scan.flags[0].episode_index, 93);
        assert!(scan.flags[0].deviation.unwrap() < -20.0);
    }

    #[test]
    fn uniform_results_have_no_flags() {
        let results: Vec<EpisodeResult> = (0..20).map(|i| ok(i, 0.6)).collect();
        assert!(flag_outliers(&results, 2.0).flags.is_empty());
    }

    #[test]
    fn unconditional_flags() {
        let mut results = vec![ok(0, 0.9), failed(1, ResponseStatus::Empty)];
        let mut flat = ok(2, 0.0);
        flat.degenerate = true;
        results.push(flat);
        results.push(failed(3, ResponseStatus::Mismatch));
        let scan = flag_outliers(&results, 100.0);
        let reasons: Vec<(u64, OutlierReason)> =
            scan.flags.iter().map(|f| (f.episode_index, f.reason)).collect();
        assert_eq!(
            reasons,
            vec![
                (1, OutlierReason::Empty),
                (2, OutlierReason::Degenerate),
                (3, OutlierReason::Mismatch)
            ]
        );
        assert!(scan.insufficient_data);
    }

    #[test]
    fn summary_rules() {
        let mut results: Vec<EpisodeResult> = (0..150)
            .map(|i| ok(i, 0.8 + 0.01 * ((i % 5) as f64 - 2.0)))
            .collect();
        results[93] = ok(93, -0.5);
        let s = curation_summary(&results, 2.0);
        assert_eq!(s.band, Some(QualityBand::Strong));
        assert_eq!(
            s.hints,
            vec![CurationHint::OodEpisodesSuspected { episodes: vec![93] }]
        );
        assert!(s.text.contains("OOD episodes suspected: 93"));

        let weak: Vec<EpisodeResult> = (0..10).map(|i| ok(i, 0.2)).collect();
        let s = curation_summary(&weak, 2.0);
        assert_eq!(s.hints, vec![CurationHint::TaskDefinitionSuspected]);
        assert!(s.text.contains("task definition / instruction ambiguity suspected"));

        let moderate: Vec<EpisodeResult> = (0..10).map(|i| ok(i, 0.5)).collect();
        assert!(curation_summary(&moderate, 2.0).hints.is_empty());

        let mut mostly_failed: Vec<EpisodeResult> = (0..10).map(|i| ok(i, 0.5)).collect();
        for r in mostly_failed.iter_mut().take(3) {
            *r = failed(r.episode_index, ResponseStatus::Mismatch);
        }
        assert_eq!(
            curation_summary(&mostly_failed, 2.0).hints,
            vec![CurationHint::TaskDefinitionSuspected]
        );
    }

    proptest! {
        #[test]
        fn band_is_monotone(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(QualityBand::from_mean(lo) <= QualityBand::from_mean(hi));
        }

        #[test]
        fn permutation_invariant_and_anti_monotone_in_k(
            vocs in proptest::collection::vec(-1.0f64..1.0, 0..40),
            rotate in 0usize..40,
            k in 0.5f64..3.0,
            dk in 0.0f64..2.0,
        ) {
            let results: Vec<EpisodeResult> = vocs.iter().enumerate().map(|(i, &v)| ok(i as u64, v)).collect();
            let mut rotated = results.clone();
            if !rotated.is_empty() {
                let r = rotate % rotated.len();
                rotated.rotate_left(r);
            }
            rotated.reverse();
            prop_assert_eq!(flag_outliers(&results, k), flag_outliers(&rotated, k));

            let loose = flag_outliers(&results, k).low_voc().count();
            let strict = flag_outliers(&results, k + dk).low_voc().count();
            prop_assert!(strict <= loose);
        }
    }
}
