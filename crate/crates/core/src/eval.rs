//! Per-episode planning and scoring, independent of transport.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::episode::EpisodeRecord;
use crate::metrics::{voc, EpisodeResult, MetricError, RankMethod};
use crate::parser::{parse_predictions, ResponseStatus};
use crate::promptgen::EvalTask;
use crate::sampler::{
    sample_frames, shuffle, unshuffle, Permutation, PermutationError, ShuffledSelection,
};
use crate::seed::{derive_seed, SeedRole};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("need {wanted} context episodes besides episode {eval_index}, only {available} available")]
    NotEnoughContext {
        eval_index: u64,
        wanted: usize,
        available: usize,
    },
    #[error("context episode {0} is the evaluated episode")]
    ContextIsEvalEpisode(u64),
    #[error(transparent)]
    Permutation(#[from] PermutationError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Sampling parameters shared by every episode of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskParams<'a> {
    pub dataset_id: &'a str,
    pub global_seed: u64,
    pub eval_frames: usize,
    pub context_frames: usize,
}

/// Picks `shots` distinct donor episodes from `candidates`, never the evaluated
/// one. The draw is seeded by the evaluated episode's coordinates.
pub fn pick_context_indices(
    candidates: &[u64],
    eval_index: u64,
    shots: usize,
    params: &TaskParams<'_>,
) -> Result<Vec<u64>, EvalError> {
    if shots == 0 {
        return Ok(Vec::new());
    }
    let mut pool: Vec<u64> = candidates.iter().copied().filter(|&i| i != eval_index).collect();
    pool.sort_unstable();
    pool.dedup();
    if pool.len() < shots {
        return Err(EvalError::NotEnoughContext {
            eval_index,
            wanted: shots,
            available: pool.len(),
        });
    }
    let seed = derive_seed(params.global_seed, params.dataset_id, eval_index, SeedRole::ContextPick);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..shots {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(shots);
    Ok(pool)
}

/// Samples and shuffles the evaluated episode and each donor, and assembles the
/// task. Donors are used in the order given.
pub fn build_task(
    eval: &EpisodeRecord,
    context: &[EpisodeRecord],
    params: &TaskParams<'_>,
) -> Result<EvalTask, EvalError> {
    let seed = |role| derive_seed(params.global_seed, params.dataset_id, eval.episode_index(), role);
    let mut selections = Vec::with_capacity(context.len());
    for (i, donor) in context.iter().enumerate() {
        if donor.episode_index() == eval.episode_index() {
            return Err(EvalError::ContextIsEvalEpisode(donor.episode_index()));
        }
        let i = i as u32;
        let frames = sample_frames(donor, params.context_frames, seed(SeedRole::ContextSample(i)));
        selections.push(shuffle(frames, seed(SeedRole::ContextShuffle(i))));
    }
    let frames = sample_frames(eval, params.eval_frames, seed(SeedRole::Sample));
    Ok(EvalTask {
        instruction: eval.instruction().to_string(),
        starting_frame: eval.first_frame().clone(),
        context: selections,
        eval: shuffle(frames, seed(SeedRole::Shuffle)),
    })
}

/// Parses a reply and scores it against the evaluated selection.
pub fn score_response(
    episode_index: u64,
    raw: &str,
    first_frame_number: u32,
    selection: &ShuffledSelection,
    method: RankMethod,
) -> Result<EpisodeResult, EvalError> {
    score_with_permutation(
        episode_index,
        raw,
        first_frame_number,
        &selection.permutation,
        selection.temporal_timesteps(),
        selection.seed,
        method,
    )
}

/// Scores a stored reply from the persisted permutation alone, without the
/// original frames. Used to recompute reports offline.
pub fn score_with_permutation(
    episode_index: u64,
    raw: &str,
    first_frame_number: u32,
    permutation: &Permutation,
    frame_timesteps: Vec<u32>,
    seed: u64,
    method: RankMethod,
) -> Result<EpisodeResult, EvalError> {
    let parsed = parse_predictions(raw, first_frame_number, permutation.len().max(1));
    let mut result = EpisodeResult {
        episode_index,
        status: parsed.status,
        voc: None,
        degenerate: false,
        predictions_temporal: Vec::new(),
        frame_timesteps,
        permutation: permutation.clone(),
        seed,
        raw_text: String::from(raw),
        note: None,
    };
    if let Ok(values) = parsed.values_in_presentation_order() {
        let temporal = unshuffle(&values, permutation)?;
        let corr = voc(&temporal, method)?;
        result.voc = Some(corr.value);
        result.degenerate = corr.degenerate;
        result.predictions_temporal = temporal;
    }
    debug_assert_eq!(result.voc.is_some(), result.status == ResponseStatus::Ok);
    Ok(result)
}

/// Result for an episode whose request failed outright.
pub fn failed_result(episode_index: u64, selection: &ShuffledSelection, note: String) -> EpisodeResult {
    EpisodeResult {
        episode_index,
        status: ResponseStatus::Empty,
        voc: None,
        degenerate: false,
        predictions_temporal: Vec::new(),
        frame_timesteps: selection.temporal_timesteps(),
        permutation: selection.permutation.clone(),
        seed: selection.seed,
        raw_text: String::new(),
        note: Some(note),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::synthetic_episode;
    use crate::oracle::{oracle_predict, OracleMode, OracleSpec};
    use crate::promptgen::build_prompt;

    fn params() -> TaskParams<'static> {
        TaskParams {
            dataset_id: "fixture",
            global_seed: 7,
            eval_frames: 15,
            context_frames: 15,
        }
    }

    #[test]
    fn context_never_contains_eval_episode() {
        let candidates: Vec<u64> = (0..20).collect();
        for eval in 0..20 {
            let picked = pick_context_indices(&candidates, eval, 2, &params()).unwrap();
            assert_eq!(picked.len(), 2);
            assert!(!picked.contains(&eval));
            assert_ne!(picked[0], picked[1]);
            assert_eq!(picked, pick_context_indices(&candidates, eval, 2, &params()).unwrap());
        }
        assert!(matches!(
            pick_context_indices(&[3, 4], 3, 2, &params()),
            Err(EvalError::NotEnoughContext { available: 1, .. })
        ));
    }

    #[test]
    fn selections_differ_across_episodes() {
        let a = build_task(&synthetic_episode(0, 100), &[], &params()).unwrap();
        let b = build_task(&synthetic_episode(1, 100), &[], &params()).unwrap();
        assert_ne!(a.eval.temporal_timesteps(), b.eval.temporal_timesteps());
        assert_ne!(a.eval.permutation, b.eval.permutation);
    }

    #[test]
    fn perfect_oracle_scores_one_and_reversed_minus_one() {
        let donors = [synthetic_episode(5, 40), synthetic_episode(6, 40)];
        let task = build_task(&synthetic_episode(0, 40), &donors, &params()).unwrap();
        assert_eq!(build_prompt(&task).image_count(), 46);
        for (mode, expected) in [(OracleMode::Perfect, 1.0), (OracleMode::Reversed, -1.0)] {
            let raw = oracle_predict(&task, &OracleSpec::new(mode));
            let r = score_response(0, &raw, task.first_eval_frame_number(), &task.eval, RankMethod::Spearman)
                .unwrap();
            assert_eq!(r.status, ResponseStatus::Ok);
            assert_eq!(r.voc, Some(expected));
            assert!(r.predictions_temporal.windows(2).all(|w| (w[0] < w[1]) == (expected > 0.0)));
        }
    }

    #[test]
    fn failures_map_to_status() {
        let task = build_task(&synthetic_episode(0, 40), &[], &params()).unwrap();
        for (mode, status) in [
            (OracleMode::Mismatching, ResponseStatus::Mismatch),
            (OracleMode::Empty, ResponseStatus::Empty),
        ] {
            let raw = oracle_predict(&task, &OracleSpec::new(mode));
            let r = score_response(0, &raw, 1, &task.eval, RankMethod::Kendall).unwrap();
            assert_eq!(r.status, status);
            assert_eq!(r.voc, None);
        }
        let raw = oracle_predict(&task, &OracleSpec::new(OracleMode::Constant));
        let r = score_response(0, &raw, 1, &task.eval, RankMethod::Spearman).unwrap();
        assert_eq!((r.voc, r.degenerate), (Some(0.0), true));
    }
}
