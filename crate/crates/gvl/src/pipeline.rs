//! End-to-end evaluation of one dataset against one endpoint.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::stream::{self, StreamExt, TryStreamExt};
use gvl_core::episode::EpisodeRecord;
use gvl_core::eval::{build_task, failed_result, pick_context_indices, score_response, EvalError, TaskParams};
use gvl_core::promptgen::{build_prompt, EvalTask};

use crate::client::{ClientError, VlmClient};
use crate::ingest::{open_dataset, DatasetHandle, IngestError};
use crate::report::{emit_report, write_raw_responses, DatasetReport, EpisodeEntry, Formats, ReportError, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("episode {0} is not in the dataset")]
    UnknownEpisode(u64),
    #[error("no episodes selected")]
    NoEpisodes,
    #[error("episode {index}: {source}")]
    Task {
        index: u64,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("worker task failed: {0}")]
    Join(String),
}

/// The episodes a run evaluates: the explicit list if given, otherwise the
/// first `episodes_per_dataset` in the handle's order.
pub fn select_episodes(handle: &DatasetHandle, cfg: &RunConfig) -> Result<Vec<u64>, PipelineError> {
    let selected = match &cfg.episode_indices {
        Some(list) => {
            if let Some(&missing) = list.iter().find(|&&i| !handle.contains(i)) {
                return Err(PipelineError::UnknownEpisode(missing));
            }
            let mut list = list.clone();
            list.sort_unstable();
            list.dedup();
            list
        }
        None => handle
            .episode_indices
            .iter()
            .copied()
            .take(cfg.episodes_per_dataset)
            .collect(),
    };
    if selected.is_empty() {
        return Err(PipelineError::NoEpisodes);
    }
    Ok(selected)
}

/// Loads an episode and its seeded donors and assembles its task.
pub fn prepare_task(handle: &DatasetHandle, cfg: &RunConfig, index: u64) -> Result<EvalTask, PipelineError> {
    let params = TaskParams {
        dataset_id: &handle.dataset_id,
        global_seed: cfg.global_seed,
        eval_frames: cfg.frames_per_episode,
        context_frames: cfg.context_frames,
    };
    let eval = handle.load_episode(index)?;
    let donors = pick_context_indices(&handle.episode_indices, index, cfg.shots, &params)
        .map_err(|source| PipelineError::Task { index, source })?;
    let context = donors
        .iter()
        .map(|&d| handle.load_episode(d))
        .collect::<Result<Vec<EpisodeRecord>, _>>()?;
    build_task(&eval, &context, &params).map_err(|source| PipelineError::Task { index, source })
}

fn temporal_labels(task: &EvalTask) -> Vec<f64> {
    let mut frames: Vec<_> = task.eval.frames.iter().map(|f| (f.frame.timestep, f.true_progress)).collect();
    frames.sort_by_key(|&(t, _)| t);
    frames.into_iter().map(|(_, p)| p).collect()
}

async fn evaluate_episode(
    handle: Arc<DatasetHandle>,
    cfg: Arc<RunConfig>,
    client: Arc<VlmClient>,
    index: u64,
) -> Result<(EpisodeEntry, String), PipelineError> {
    let task = {
        let (handle, cfg) = (Arc::clone(&handle), Arc::clone(&cfg));
        tokio::task::spawn_blocking(move || prepare_task(&handle, &cfg, index))
            .await
            .map_err(|e| PipelineError::Join(e.to_string()))??
    };
    let prompt = build_prompt(&task);
    let first = task.first_eval_frame_number();
    let result = match client.complete(&prompt).await {
        Ok(reply) => {
            tracing::debug!(index, attempts = reply.attempt_count, latency = ?reply.latency, "reply received");
            score_response(index, &reply.text, first, &task.eval, cfg.method)
                .map_err(|source| PipelineError::Task { index, source })?
        }
        Err(e @ (ClientError::Transient { .. } | ClientError::Permanent { .. } | ClientError::Protocol(_))) => {
            tracing::warn!(index, error = %e, "episode request failed");
            failed_result(index, &task.eval, e.to_string())
        }
        Err(e) => return Err(e.into()),
    };
    let raw = result.raw_text.clone();
    Ok((EpisodeEntry::from_result(&result, temporal_labels(&task), first), raw))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Runs every selected episode, then writes `report.json`, the CSV files and
/// the raw replies under `out`.
pub async fn run_evaluation(cfg: RunConfig, client: VlmClient, out: &Path) -> Result<DatasetReport, PipelineError> {
    let started_at = now();
    let handle = open_dataset(&cfg.dataset)?;
    let selected = select_episodes(&handle, &cfg)?;
    tracing::info!(dataset = %handle.dataset_id, episodes = selected.len(), shots = cfg.shots, "starting run");
    let width = client.config().max_concurrency.max(1);
    let (handle, cfg, client) = (Arc::new(handle), Arc::new(cfg), Arc::new(client));
    let mut done: Vec<(EpisodeEntry, String)> = stream::iter(selected)
        .map(|index| evaluate_episode(Arc::clone(&handle), Arc::clone(&cfg), Arc::clone(&client), index))
        .buffer_unordered(width)
        .try_collect()
        .await?;
    done.sort_by_key(|(entry, _)| entry.index);

    write_raw_responses(out, done.iter().map(|(e, raw)| (e.index, raw.as_str())))?;
    let entries = done.into_iter().map(|(e, _)| e).collect();
    let report = DatasetReport::build(
        Arc::unwrap_or_clone(cfg),
        handle.dataset_id.clone(),
        entries,
        started_at,
        now(),
    );
    emit_report(&report, out, Formats::ALL)?;
    tracing::info!(n_ok = report.stats.n_ok, voc_mean = ?report.stats.voc_mean, "run finished");
    Ok(report)
}

/// Path of the stored report inside an output directory.
pub fn report_path(dir: &Path) -> PathBuf {
    dir.join(crate::report::REPORT_FILE)
}
