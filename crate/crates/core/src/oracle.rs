//! A deterministic stand-in for a vision-language model.
//!
//! Given the ground-truth progress of each evaluated frame, it writes a reply in
//! the requested response format, optionally corrupted in a controlled way. The
//! same renderer backs the in-process [`oracle_predict`] and the HTTP mock in the
//! `gvl` crate.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::parser::format_response_line;
use crate::promptgen::EvalTask;
use crate::seed::seed_from_bytes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OracleMode {
    /// The true progress of every frame.
    #[default]
    Perfect,
    /// True progress plus seeded Gaussian noise, clamped to `[0, 100]`.
    Noisy,
    /// 50% for every frame.
    Constant,
    /// `100 - progress`.
    Reversed,
    /// Perfect, but with the last frame line missing.
    Mismatching,
    /// An empty reply.
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleSpec {
    pub mode: OracleMode,
    /// Standard deviation of the noise in percentage points (noisy mode only).
    pub noise_sigma: f64,
    pub seed: u64,
}

impl OracleSpec {
    pub fn new(mode: OracleMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn noisy(noise_sigma: f64, seed: u64) -> Self {
        assert!(noise_sigma >= 0.0 && noise_sigma.is_finite(), "noise_sigma must be >= 0");
        Self {
            mode: OracleMode::Noisy,
            noise_sigma,
            seed,
        }
    }
}

/// Writes a reply for frames given as `(frame_number, true_progress)` in
/// presentation order. `noise_key` selects the noise stream together with the
/// spec's seed.
pub fn render_response(frames: &[(u32, f64)], spec: &OracleSpec, noise_key: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_from_bytes(spec.seed, &noise_key.to_le_bytes()));
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("finite sigma");
    let lines: Vec<String> = match spec.mode {
        OracleMode::Empty => return String::new(),
        OracleMode::Perfect | OracleMode::Mismatching => frames
            .iter()
            .map(|&(n, p)| line(n, p))
            .take(if spec.mode == OracleMode::Mismatching {
                frames.len().saturating_sub(1)
            } else {
                frames.len()
            })
            .collect(),
        OracleMode::Noisy => frames
            .iter()
            .map(|&(n, p)| {
                let value = (p + noise.sample(&mut rng)).clamp(0.0, 100.0);
                line(n, value)
            })
            .collect(),
        OracleMode::Constant => frames.iter().map(|&(n, _)| line(n, 50.0)).collect(),
        OracleMode::Reversed => frames.iter().map(|&(n, p)| line(n, 100.0 - p)).collect(),
    };
    lines.join("\n")
}

fn line(frame_number: u32, value: f64) -> String {
    let rounded = libm::round(value * 100.0) / 100.0;
    format_response_line(frame_number, "simulated frame", rounded)
}

/// Answers a task directly from its ground-truth eval labels.
pub fn oracle_predict(task: &EvalTask, spec: &OracleSpec) -> String {
    let first = task.first_eval_frame_number();
    let frames: Vec<(u32, f64)> = task
        .eval
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| (first + i as u32, f.true_progress))
        .collect();
    render_response(&frames, spec, task.eval.seed)
}
