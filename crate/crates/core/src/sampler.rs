//! Ground-truth labels, seeded frame sampling and shuffling.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::episode::{EpisodeRecord, FrameRef};

/// A frame with its ground-truth completion percentage.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabeledFrame {
    pub frame: FrameRef,
    pub true_progress: f64,
}

/// Linear progress labels: `100 * t / (T - 1)`. The first frame is exactly 0
/// and the last exactly 100.
pub fn progress_labels(episode: &EpisodeRecord) -> Vec<LabeledFrame> {
    let last = (episode.len() - 1) as f64;
    episode
        .frames()
        .iter()
        .map(|frame| LabeledFrame {
            true_progress: 100.0 * f64::from(frame.timestep) / last,
            frame: frame.clone(),
        })
        .collect()
}

/// Draws `min(n, T)` distinct timesteps uniformly without replacement and
/// returns them in timestep order with labels attached.
///
/// # Panics
///
/// If `n == 0`.
pub fn sample_frames(episode: &EpisodeRecord, n: usize, seed: u64) -> Vec<LabeledFrame> {
    assert!(n >= 1, "sample_frames needs n >= 1");
    let labels = progress_labels(episode);
    if n >= labels.len() {
        return labels;
    }
    let picked = sample_indices(labels.len(), n, seed);
    let mut labels: Vec<Option<LabeledFrame>> = labels.into_iter().map(Some).collect();
    picked
        .into_iter()
        .map(|i| labels[i].take().expect("indices are distinct"))
        .collect()
}

/// Partial Fisher–Yates over `0..len`; returns `count` sorted distinct indices.
fn sample_indices(len: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..len).collect();
    for i in 0..count {
        let j = rng.random_range(i..len);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool.sort_unstable();
    pool
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PermutationError {
    #[error("permutation is not a bijection on 0..{len}")]
    NotBijection { len: usize },
    #[error("length mismatch: {values} values for a permutation of {permutation}")]
    LengthMismatch { values: usize, permutation: usize },
}

/// Maps a presentation position to the temporal rank of the frame shown there.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<usize>", into = "Vec<usize>"))]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(ranks: Vec<usize>) -> Result<Self, PermutationError> {
        let len = ranks.len();
        let mut seen = alloc::vec![false; len];
        for &r in &ranks {
            if r >= len || core::mem::replace(&mut seen[r], true) {
                return Err(PermutationError::NotBijection { len });
            }
        }
        Ok(Self(ranks))
    }

    pub fn identity(len: usize) -> Self {
        Self((0..len).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = PermutationError;

    fn try_from(value: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(value: Permutation) -> Self {
        value.0
    }
}

/// Frames in the order they are shown to the model, plus the permutation that
/// puts them back in temporal order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShuffledSelection {
    pub frames: Vec<LabeledFrame>,
    pub permutation: Permutation,
    pub seed: u64,
}

impl ShuffledSelection {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Timesteps of the selected frames in temporal order.
    pub fn temporal_timesteps(&self) -> Vec<u32> {
        let mut out = alloc::vec![0u32; self.len()];
        for (pos, &rank) in self.permutation.as_slice().iter().enumerate() {
            out[rank] = self.frames[pos].frame.timestep;
        }
        out
    }

    /// Ground-truth labels in presentation order.
    pub fn labels_in_presentation_order(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.true_progress).collect()
    }
}

/// Shuffles timestep-sorted frames with a seeded Fisher–Yates pass and records
/// the permutation.
pub fn shuffle(frames: Vec<LabeledFrame>, seed: u64) -> ShuffledSelection {
    debug_assert!(frames.windows(2).all(|w| w[0].frame.timestep < w[1].frame.timestep));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let presented = order.iter().map(|&rank| frames[rank].clone()).collect();
    ShuffledSelection {
        frames: presented,
        permutation: Permutation(order),
        seed,
    }
}

/// Restores presentation-order values to temporal order:
/// `out[rank] = values[position]` where `permutation[position] == rank`.
pub fn unshuffle(values: &[f64], permutation: &Permutation) -> Result<Vec<f64>, PermutationError> {
    if values.len() != permutation.len() {
        return Err(PermutationError::LengthMismatch {
            values: values.len(),
            permutation: permutation.len(),
        });
    }
    let mut out = alloc::vec![0.0; values.len()];
    for (&value, &rank) in values.iter().zip(permutation.as_slice()) {
        out[rank] = value;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::synthetic_episode;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn labels_are_linear_with_exact_endpoints() {
        let two: Vec<f64> = progress_labels(&synthetic_episode(0, 2))
            .iter()
            .map(|l| l.true_progress)
            .collect();
        assert_eq!(two, vec![0.0, 100.0]);
        let five: Vec<f64> = progress_labels(&synthetic_episode(0, 5))
            .iter()
            .map(|l| l.true_progress)
            .collect();
        assert_eq!(five, vec![0.0, 25.0, 50.0, 75.0, 100.0]);
        let ninety = progress_labels(&synthetic_episode(0, 90));
        assert!((ninety[30].true_progress - 3000.0 / 89.0).abs() < 1e-12);
        assert!((ninety[30].true_progress - 33.707_865).abs() < 1e-6);
    }

    #[test]
    fn endpoints_exact_for_all_lengths() {
        for len in 2..400 {
            let labels = progress_labels(&synthetic_episode(0, len));
            assert_eq!(labels[0].true_progress, 0.0);
            assert_eq!(labels.last().unwrap().true_progress, 100.0);
        }
    }

    #[test]
    fn short_episodes_return_every_frame() {
        let ep = synthetic_episode(1, 10);
        let picked = sample_frames(&ep, 15, 9);
        assert_eq!(picked.len(), 10);
        assert!(picked.iter().enumerate().all(|(i, f)| f.frame.timestep == i as u32));
    }

    #[test]
    fn sampling_is_deterministic_sorted_and_distinct() {
        let ep = synthetic_episode(1, 200);
        let a = sample_frames(&ep, 15, 42);
        assert_eq!(a, sample_frames(&ep, 15, 42));
        assert_eq!(a.len(), 15);
        assert!(a.windows(2).all(|w| w[0].frame.timestep < w[1].frame.timestep));
        assert_ne!(a, sample_frames(&ep, 15, 43));
    }

    // Every timestep should be included with probability 15/200. Over 10,000
    // seeds each count is Binomial(10000, 0.075); allow 3 sigma plus a
    // Bonferroni-ish margin of one extra sigma for the 200 simultaneous checks.
    #[test]
    fn inclusion_frequency_is_uniform() {
        let ep = synthetic_episode(1, 200);
        let trials = 10_000u32;
        let mut counts = vec![0u32; 200];
        for seed in 0..trials {
            for f in sample_frames(&ep, 15, u64::from(seed)) {
                counts[f.frame.timestep as usize] += 1;
            }
        }
        let p = 15.0 / 200.0;
        let mean = f64::from(trials) * p;
        let sigma = libm::sqrt(f64::from(trials) * p * (1.0 - p));
        for (t, &c) in counts.iter().enumerate() {
            let dev = (f64::from(c) - mean).abs();
            assert!(dev <= 4.0 * sigma, "timestep {t}: {c} vs {mean}");
        }
        let within_3 = counts
            .iter()
            .filter(|&&c| (f64::from(c) - mean).abs() <= 3.0 * sigma)
            .count();
        assert!(within_3 >= 197, "{within_3} of 200 within 3 sigma");
    }

    #[test]
    fn single_frame_shuffle_is_identity() {
        let frames = sample_frames(&synthetic_episode(0, 2), 1, 5);
        let s = shuffle(frames, 77);
        assert_eq!(s.permutation, Permutation::identity(1));
    }

    #[test]
    fn shuffle_is_deterministic() {
        let frames = sample_frames(&synthetic_episode(0, 60), 15, 5);
        assert_eq!(shuffle(frames.clone(), 3), shuffle(frames, 3));
    }

    // 4! = 24 permutations; with 48,000 seeds each appears ~2000 times
    // (sigma ~ 43.8). Allow 4 sigma.
    #[test]
    fn all_permutations_of_four_are_equally_likely() {
        let frames = sample_frames(&synthetic_episode(0, 4), 4, 0);
        let trials = 48_000u64;
        let mut counts = alloc::collections::BTreeMap::new();
        for seed in 0..trials {
            let s = shuffle(frames.clone(), seed);
            *counts.entry(Vec::from(s.permutation)).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 24);
        let p = 1.0 / 24.0;
        let mean = trials as f64 * p;
        let sigma = libm::sqrt(trials as f64 * p * (1.0 - p));
        for (perm, &c) in &counts {
            assert!((c as f64 - mean).abs() <= 4.0 * sigma, "{perm:?}: {c}");
        }
    }

    #[test]
    fn unshuffle_known_permutation() {
        let (a, b, c) = (1.0, 2.0, 3.0);
        let perm = Permutation::new(vec![2, 0, 1]).unwrap();
        assert_eq!(unshuffle(&[c, a, b], &perm).unwrap(), vec![a, b, c]);
        let id = Permutation::identity(3);
        assert_eq!(unshuffle(&[c, a, b], &id).unwrap(), vec![c, a, b]);
    }

    #[test]
    fn unshuffle_rejects_bad_input() {
        let perm = Permutation::identity(3);
        assert_eq!(
            unshuffle(&[1.0], &perm),
            Err(PermutationError::LengthMismatch {
                values: 1,
                permutation: 3
            })
        );
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
    }

    proptest! {
        #[test]
        fn unshuffle_restores_temporal_order(len in 2u32..120, n in 1usize..30, seed: u64) {
            let ep = synthetic_episode(0, len);
            let sorted = sample_frames(&ep, n, seed);
            let s = shuffle(sorted.clone(), seed ^ 0x5555);
            let restored = unshuffle(&s.labels_in_presentation_order(), &s.permutation).unwrap();
            let expected: Vec<f64> = sorted.iter().map(|f| f.true_progress).collect();
            prop_assert_eq!(&restored, &expected);
            prop_assert!(restored.windows(2).all(|w| w[0] <= w[1]));
            let ts: Vec<u32> = sorted.iter().map(|f| f.frame.timestep).collect();
            prop_assert_eq!(s.temporal_timesteps(), ts);
        }

        #[test]
        fn unshuffle_inverts_arbitrary_values(values in proptest::collection::vec(-1e6f64..1e6, 1..40), seed: u64) {
            let frames: Vec<LabeledFrame> = values.iter().enumerate().map(|(i, &v)| LabeledFrame {
                frame: FrameRef { timestep: i as u32, image_path: alloc::string::String::new(), width: 1, height: 1 },
                true_progress: v,
            }).collect();
            let s = shuffle(frames, seed);
            prop_assert_eq!(unshuffle(&s.labels_in_presentation_order(), &s.permutation).unwrap(), values);
        }
    }
}
