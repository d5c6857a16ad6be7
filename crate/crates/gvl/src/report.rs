//! Run configuration, the persisted dataset report and its derived files.
//!
//! An output directory holds:
//!
//! - `report.json`: the authoritative report
//! - `raw/episode_<index>.txt`: every raw model reply, verbatim
//! - `report.csv`: one results-table row (`Model,Dataset,Ctx,VOC Mean,VOC Std,Std Err,Mism.,Empty`)
//! - `series.csv`: per-episode `timestep` vs predicted percentage, for plotting
//! - `outliers.json`: written by the `outliers` command

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use gvl_core::curation::{curation_summary, OutlierFlag, QualityBand};
use gvl_core::eval::score_with_permutation;
use gvl_core::metrics::{aggregate, AggregateStats, EpisodeResult, RankMethod};
use gvl_core::parser::ResponseStatus;
use gvl_core::sampler::Permutation;
use serde::{Deserialize, Serialize};

pub const REPORT_FILE: &str = "report.json";
pub const CSV_FILE: &str = "report.csv";
pub const SERIES_FILE: &str = "series.csv";
pub const OUTLIERS_FILE: &str = "outliers.json";
pub const RAW_DIR: &str = "raw";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid report {path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Echo of the settings a report was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub endpoint: String,
    pub model: String,
    pub shots: usize,
    pub episodes_per_dataset: usize,
    /// Explicit episode list; overrides `episodes_per_dataset`.
    pub episode_indices: Option<Vec<u64>>,
    pub frames_per_episode: usize,
    /// Frames per context episode.
    pub context_frames: usize,
    pub method: RankMethod,
    pub global_seed: u64,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub image_max_edge: u32,
    pub outlier_k: f64,
}

impl RunConfig {
    pub const DEFAULT_EPISODES: usize = 50;
    pub const DEFAULT_FRAMES: usize = 15;

    pub fn new(dataset: impl Into<PathBuf>, endpoint: &str, model: &str) -> Self {
        Self {
            dataset: dataset.into(),
            endpoint: endpoint.into(),
            model: model.into(),
            shots: 0,
            episodes_per_dataset: Self::DEFAULT_EPISODES,
            episode_indices: None,
            frames_per_episode: Self::DEFAULT_FRAMES,
            context_frames: Self::DEFAULT_FRAMES,
            method: RankMethod::Spearman,
            global_seed: 0,
            temperature: 1.0,
            max_output_tokens: 2048,
            image_max_edge: 512,
            outlier_k: gvl_core::curation::DEFAULT_OUTLIER_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub index: u64,
    pub status: ResponseStatus,
    pub voc: Option<f64>,
    pub degenerate: bool,
    pub predictions_temporal: Vec<f64>,
    pub frame_timesteps: Vec<u32>,
    /// Ground-truth labels of the evaluated frames, temporal order.
    pub true_progress: Vec<f64>,
    pub permutation: Permutation,
    pub seed: u64,
    /// Number the prompt gave to the first evaluated frame.
    pub first_frame_number: u32,
    /// Relative to the report directory.
    pub raw_response_path: String,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub config: RunConfig,
    pub model: String,
    pub dataset_id: String,
    pub shots: usize,
    pub started_at: String,
    pub finished_at: String,
    pub episodes: Vec<EpisodeEntry>,
    pub stats: AggregateStats,
    pub band: Option<QualityBand>,
    pub outliers: Vec<OutlierFlag>,
    pub hints: Vec<String>,
}

pub fn raw_response_path(index: u64) -> String {
    format!("{RAW_DIR}/episode_{index:06}.txt")
}

impl EpisodeEntry {
    pub fn from_result(result: &EpisodeResult, true_progress: Vec<f64>, first_frame_number: u32) -> Self {
        Self {
            index: result.episode_index,
            status: result.status,
            voc: result.voc,
            degenerate: result.degenerate,
            predictions_temporal: result.predictions_temporal.clone(),
            frame_timesteps: result.frame_timesteps.clone(),
            true_progress,
            permutation: result.permutation.clone(),
            seed: result.seed,
            first_frame_number,
            raw_response_path: raw_response_path(result.episode_index),
            note: result.note.clone(),
        }
    }

    /// The entry as a core result; `raw_text` is left empty.
    pub fn to_result(&self) -> EpisodeResult {
        EpisodeResult {
            episode_index: self.index,
            status: self.status,
            voc: self.voc,
            degenerate: self.degenerate,
            predictions_temporal: self.predictions_temporal.clone(),
            frame_timesteps: self.frame_timesteps.clone(),
            permutation: self.permutation.clone(),
            seed: self.seed,
            raw_text: String::new(),
            note: self.note.clone(),
        }
    }
}

impl DatasetReport {
    /// Assembles a report from ordered per-episode results.
    pub fn build(
        config: RunConfig,
        dataset_id: String,
        entries: Vec<EpisodeEntry>,
        started_at: String,
        finished_at: String,
    ) -> Self {
        let results: Vec<EpisodeResult> = entries.iter().map(EpisodeEntry::to_result).collect();
        let summary = curation_summary(&results, config.outlier_k);
        Self {
            model: config.model.clone(),
            shots: config.shots,
            dataset_id,
            started_at,
            finished_at,
            episodes: entries,
            stats: summary.stats,
            band: summary.band,
            outliers: summary.outliers.flags,
            hints: summary.hints.iter().map(ToString::to_string).collect(),
            config,
        }
    }

    pub fn results(&self) -> Vec<EpisodeResult> {
        self.episodes.iter().map(EpisodeEntry::to_result).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(dir: &Path) -> Result<Self, ReportError> {
        let path = dir.join(REPORT_FILE);
        let text = fs::read_to_string(&path).map_err(io_at(&path))?;
        Self::from_json(&text).map_err(|e| ReportError::Invalid {
            path,
            reason: e.to_string(),
        })
    }

    /// Re-parses the persisted raw replies and rebuilds every episode result and
    /// the statistics, without contacting any endpoint.
    pub fn recompute_from_raw(&self, dir: &Path) -> Result<Self, ReportError> {
        let mut entries = Vec::with_capacity(self.episodes.len());
        for entry in &self.episodes {
            let path = dir.join(&entry.raw_response_path);
            let raw = fs::read_to_string(&path).map_err(io_at(&path))?;
            let result = if entry.note.is_some() && raw.is_empty() {
                entry.to_result()
            } else {
                score_with_permutation(
                    entry.index,
                    &raw,
                    entry.first_frame_number,
                    &entry.permutation,
                    entry.frame_timesteps.clone(),
                    entry.seed,
                    self.config.method,
                )
                .map_err(|e| ReportError::Invalid {
                    path: path.clone(),
                    reason: e.to_string(),
                })?
            };
            let mut fresh = EpisodeEntry::from_result(&result, entry.true_progress.clone(), entry.first_frame_number);
            fresh.raw_response_path = entry.raw_response_path.clone();
            fresh.note = entry.note.clone();
            entries.push(fresh);
        }
        Ok(Self::build(
            self.config.clone(),
            self.dataset_id.clone(),
            entries,
            self.started_at.clone(),
            self.finished_at.clone(),
        ))
    }

    /// Header plus one results-table row.
    pub fn csv_row(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["Model", "Dataset", "Ctx", "VOC Mean", "VOC Std", "Std Err", "Mism.", "Empty"])
            .expect("in-memory write");
        let cell = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
        w.write_record([
            self.model.clone(),
            self.dataset_id.clone(),
            self.shots.to_string(),
            cell(self.stats.voc_mean),
            cell(self.stats.voc_std),
            cell(self.stats.voc_stderr),
            self.stats.n_mismatch.to_string(),
            self.stats.n_empty.to_string(),
        ])
        .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// `episode_index,timestep,true_progress,predicted_progress` for every ok
    /// episode, temporal order.
    pub fn series_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["episode_index", "timestep", "true_progress", "predicted_progress"])
            .expect("in-memory write");
        for e in self.episodes.iter().filter(|e| e.status == ResponseStatus::Ok) {
            for (i, (&t, &pred)) in e.frame_timesteps.iter().zip(&e.predictions_temporal).enumerate() {
                let truth = e.true_progress.get(i).map(|v| v.to_string()).unwrap_or_default();
                w.write_record([e.index.to_string(), t.to_string(), truth, pred.to_string()])
                    .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Which derived files to write next to `report.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub json: bool,
    pub csv: bool,
    pub series: bool,
}

impl Formats {
    pub const ALL: Formats = Formats {
        json: true,
        csv: true,
        series: true,
    };
}

pub fn emit_report(report: &DatasetReport, dir: &Path, formats: Formats) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let mut written = Vec::new();
    let mut write = |name: &str, contents: String| -> Result<(), ReportError> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(io_at(&path))?;
        written.push(path);
        Ok(())
    };
    if formats.json {
        write(REPORT_FILE, report.to_json())?;
    }
    if formats.csv {
        write(CSV_FILE, report.csv_row())?;
    }
    if formats.series {
        write(SERIES_FILE, report.series_csv())?;
    }
    Ok(written)
}

/// Writes raw replies under `dir/raw/`.
pub fn write_raw_responses<'a>(
    dir: &Path,
    responses: impl IntoIterator<Item = (u64, &'a str)>,
) -> Result<(), ReportError> {
    let raw_dir = dir.join(RAW_DIR);
    fs::create_dir_all(&raw_dir).map_err(io_at(&raw_dir))?;
    for (index, text) in responses {
        let path = dir.join(raw_response_path(index));
        fs::write(&path, text).map_err(io_at(&path))?;
    }
    Ok(())
}

/// JSON listing produced by the `outliers` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierListing {
    pub dataset_id: String,
    pub model: String,
    pub k: f64,
    pub band: Option<QualityBand>,
    pub insufficient_data: bool,
    pub outliers: Vec<OutlierFlag>,
    pub hints: Vec<String>,
    /// Hints come from a fixed rule table, not from the model.
    pub hints_are_heuristic: bool,
    pub summary: String,
}

pub fn outlier_listing(report: &DatasetReport, k: f64) -> OutlierListing {
    let summary = curation_summary(&report.results(), k);
    OutlierListing {
        dataset_id: report.dataset_id.clone(),
        model: report.model.clone(),
        k,
        band: summary.band,
        insufficient_data: summary.outliers.insufficient_data,
        outliers: summary.outliers.flags,
        hints: summary.hints.iter().map(ToString::to_string).collect(),
        hints_are_heuristic: true,
        summary: summary.text,
    }
}

impl OutlierListing {
    pub fn human(&self) -> String {
        let mut out = format!(
            "{} / {} (k = {})\n{}\n",
            self.model, self.dataset_id, self.k, self.summary
        );
        if self.outliers.is_empty() {
            out.push_str("no flagged episodes\n");
        }
        for f in &self.outliers {
            let voc = f.voc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            let dev = f.deviation.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "episode {:>6}  {:<16} voc {:>8}  z {:>7}\n",
                f.episode_index, f.reason.to_string(), voc, dev
            ));
        }
        out
    }
}

/// Aggregate of a report's current entries, for consistency checks.
pub fn stats_of(report: &DatasetReport) -> AggregateStats {
    aggregate(&report.results())
}
