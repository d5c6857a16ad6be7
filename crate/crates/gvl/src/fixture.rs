//! Synthetic datasets whose frames carry their ground-truth progress in the
//! label block read by the mock endpoint.

use std::fs;
use std::path::Path;

use crate::ingest::{EPISODES_DIR, EPISODE_FILE, FRAMES_DIR, MANIFEST_FILE};
use crate::mockvlm::label_image;

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub dataset_id: String,
    pub instruction: String,
    pub episode_indices: Vec<u64>,
    pub frames_per_episode: u32,
    pub width: u32,
    pub height: u32,
}

impl FixtureSpec {
    pub fn new(dataset_id: &str, episodes: u64, frames_per_episode: u32) -> Self {
        Self {
            dataset_id: dataset_id.into(),
            instruction: "open the door".into(),
            episode_indices: (0..episodes).collect(),
            frames_per_episode,
            width: 64,
            height: 48,
        }
    }
}

/// Writes the dataset layout under `root`. Frame `t` of a `T`-frame episode is
/// labelled `100 * t / (T - 1)`.
pub fn write_fixture(root: &Path, spec: &FixtureSpec) -> std::io::Result<()> {
    fs::create_dir_all(root.join(EPISODES_DIR))?;
    fs::write(
        root.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&serde_json::json!({ "dataset_id": spec.dataset_id }))?,
    )?;
    let last = f64::from(spec.frames_per_episode.saturating_sub(1).max(1));
    for &index in &spec.episode_indices {
        let dir = root.join(EPISODES_DIR).join(index.to_string());
        fs::create_dir_all(dir.join(FRAMES_DIR))?;
        fs::write(
            dir.join(EPISODE_FILE),
            serde_json::to_string_pretty(&serde_json::json!({ "instruction": spec.instruction }))?,
        )?;
        for t in 0..spec.frames_per_episode {
            let progress = 100.0 * f64::from(t) / last;
            label_image(spec.width, spec.height, progress)
                .save(dir.join(FRAMES_DIR).join(format!("{t:06}.png")))
                .map_err(std::io::Error::other)?;
        }
    }
    Ok(())
}
