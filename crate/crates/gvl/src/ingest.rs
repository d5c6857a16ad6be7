//! Loading episodic datasets from disk.
//!
//! Layout:
//!
//! ```text
//! <root>/dataset.json                      {"dataset_id": "...", "default_instruction": "..."}
//! <root>/episodes/<index>/episode.json     {"instruction": "..."}
//! <root>/episodes/<index>/frames/000000.png
//! <root>/episodes/<index>/frames/000001.jpg
//! ```
//!
//! Episode directories are named by their decimal index. Frame files are named
//! by their timestep zero-padded to six digits and must cover `0..T` without gaps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gvl_core::{EpisodeError, EpisodeRecord, FrameRef};
use serde::Deserialize;

pub const MANIFEST_FILE: &str = "dataset.json";
pub const EPISODES_DIR: &str = "episodes";
pub const EPISODE_FILE: &str = "episode.json";
pub const FRAMES_DIR: &str = "frames";
const FRAME_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("manifest error at {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("dataset at {0} has no episodes")]
    EmptyDataset(PathBuf),
    #[error("episode {0} not found in dataset")]
    NotFound(u64),
    #[error("episode {index}: metadata error: {reason}")]
    Metadata { index: u64, reason: String },
    #[error("episode {index}, timestep {timestep}: cannot decode frame: {reason}")]
    FrameDecode {
        index: u64,
        timestep: u32,
        reason: String,
    },
    #[error("episode {index}: {reason}")]
    Invariant { index: u64, reason: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<EpisodeError> for IngestError {
    fn from(err: EpisodeError) -> Self {
        let index = match &err {
            EpisodeError::EmptyInstruction { episode_index }
            | EpisodeError::TooShort { episode_index, .. }
            | EpisodeError::TimestepGap { episode_index, .. }
            | EpisodeError::ZeroSizedFrame { episode_index, .. } => *episode_index,
        };
        IngestError::Invariant {
            index,
            reason: err.to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Deserialize)]
struct Manifest {
    dataset_id: String,
    #[serde(default)]
    default_instruction: Option<String>,
}

#[derive(Debug, Deserialize)]
struct EpisodeMeta {
    #[serde(default)]
    instruction: Option<String>,
}

/// An opened dataset. Read-only; episodes are loaded on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetHandle {
    pub root_path: PathBuf,
    pub dataset_id: String,
    pub default_instruction: Option<String>,
    /// Strictly increasing.
    pub episode_indices: Vec<u64>,
}

pub fn open_dataset(root: impl AsRef<Path>) -> Result<DatasetHandle, IngestError> {
    let root = root.as_ref();
    let manifest_path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| IngestError::Manifest {
        path: manifest_path.clone(),
        reason: e.to_string(),
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| IngestError::Manifest {
        path: manifest_path.clone(),
        reason: e.to_string(),
    })?;
    if manifest.dataset_id.trim().is_empty() {
        return Err(IngestError::Manifest {
            path: manifest_path,
            reason: "dataset_id is empty".into(),
        });
    }

    let episodes_dir = root.join(EPISODES_DIR);
    let entries = fs::read_dir(&episodes_dir).map_err(|e| IngestError::Manifest {
        path: episodes_dir.clone(),
        reason: e.to_string(),
    })?;
    let mut indices = Vec::new();
    for entry in entries {
        let entry = entry.map_err(io_err(&episodes_dir))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with('.') || !entry.path().is_dir() {
            continue;
        }
        let index = parse_canonical_index(&name).ok_or_else(|| IngestError::Manifest {
            path: entry.path(),
            reason: format!("episode directory name {name:?} is not a canonical decimal index"),
        })?;
        indices.push(index);
    }
    if indices.is_empty() {
        return Err(IngestError::EmptyDataset(root.to_path_buf()));
    }
    indices.sort_unstable();
    Ok(DatasetHandle {
        root_path: root.to_path_buf(),
        dataset_id: manifest.dataset_id,
        default_instruction: manifest.default_instruction,
        episode_indices: indices,
    })
}

fn parse_canonical_index(name: &str) -> Option<u64> {
    if name.is_empty() || !name.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if name.len() > 1 && name.starts_with('0') {
        return None;
    }
    name.parse().ok()
}

impl DatasetHandle {
    pub fn contains(&self, index: u64) -> bool {
        self.episode_indices.binary_search(&index).is_ok()
    }

    pub fn episode_dir(&self, index: u64) -> PathBuf {
        self.root_path.join(EPISODES_DIR).join(index.to_string())
    }

    pub fn load_episode(&self, index: u64) -> Result<EpisodeRecord, IngestError> {
        load_episode(self, index)
    }
}

/// Reads one episode's metadata and frame list. Every frame header is decoded
/// to obtain its dimensions.
pub fn load_episode(handle: &DatasetHandle, index: u64) -> Result<EpisodeRecord, IngestError> {
    if !handle.contains(index) {
        return Err(IngestError::NotFound(index));
    }
    let dir = handle.episode_dir(index);
    let instruction = read_instruction(&dir, index, handle.default_instruction.as_deref())?;

    let frames_dir = dir.join(FRAMES_DIR);
    let mut by_timestep: BTreeMap<u32, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(&frames_dir).map_err(io_err(&frames_dir))? {
        let path = entry.map_err(io_err(&frames_dir))?.path();
        let Some(ext) = path.extension().and_then(|e| e.to_str()) else {
            continue;
        };
        if !FRAME_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str()) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if stem.len() != 6 || !stem.bytes().all(|b| b.is_ascii_digit()) {
            return Err(IngestError::Invariant {
                index,
                reason: format!("frame file {:?} is not named by a 6-digit timestep", path.file_name().unwrap_or_default()),
            });
        }
        let timestep: u32 = stem.parse().expect("six ascii digits");
        if by_timestep.insert(timestep, path).is_some() {
            return Err(IngestError::Invariant {
                index,
                reason: format!("duplicate frame for timestep {timestep}"),
            });
        }
    }

    let mut frames = Vec::with_capacity(by_timestep.len());
    for (timestep, path) in by_timestep {
        let (width, height) = image::ImageReader::open(&path)
            .and_then(|r| r.with_guessed_format())
            .map_err(|e| IngestError::FrameDecode {
                index,
                timestep,
                reason: e.to_string(),
            })?
            .into_dimensions()
            .map_err(|e| IngestError::FrameDecode {
                index,
                timestep,
                reason: e.to_string(),
            })?;
        frames.push(FrameRef {
            timestep,
            image_path: path.to_string_lossy().into_owned(),
            width,
            height,
        });
    }
    Ok(EpisodeRecord::new(index, instruction, frames)?)
}

fn read_instruction(dir: &Path, index: u64, default: Option<&str>) -> Result<String, IngestError> {
    let meta_path = dir.join(EPISODE_FILE);
    let from_file = match fs::read_to_string(&meta_path) {
        Ok(text) => {
            let meta: EpisodeMeta = serde_json::from_str(&text).map_err(|e| IngestError::Metadata {
                index,
                reason: e.to_string(),
            })?;
            meta.instruction
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(io_err(&meta_path)(e)),
    };
    from_file
        .or_else(|| default.map(str::to_owned))
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| IngestError::Metadata {
            index,
            reason: "no instruction in episode.json and no default_instruction".into(),
        })
}
