//! Episode and frame references.

use alloc::string::String;
use alloc::vec::Vec;

/// A single still frame of an episode. The image itself is referenced by path
/// and only decoded by the IO layer.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameRef {
    pub timestep: u32,
    pub image_path: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EpisodeError {
    #[error("episode {episode_index}: instruction is empty")]
    EmptyInstruction { episode_index: u64 },
    #[error("episode {episode_index}: needs at least 2 frames, found {found}")]
    TooShort { episode_index: u64, found: usize },
    #[error("episode {episode_index}: expected timestep {expected}, found {found}")]
    TimestepGap {
        episode_index: u64,
        expected: u32,
        found: u32,
    },
    #[error("episode {episode_index}: frame {timestep} has zero-sized dimensions")]
    ZeroSizedFrame { episode_index: u64, timestep: u32 },
}

/// One demonstration: an instruction plus frames ordered by timestep `0..T`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeRecord {
    episode_index: u64,
    instruction: String,
    frames: Vec<FrameRef>,
}

impl EpisodeRecord {
    /// Builds a record, checking that it has a non-empty instruction, at least
    /// two frames, and timesteps exactly `0, 1, .., T-1` in order.
    pub fn new(
        episode_index: u64,
        instruction: impl Into<String>,
        frames: Vec<FrameRef>,
    ) -> Result<Self, EpisodeError> {
        let instruction = instruction.into();
        if instruction.trim().is_empty() {
            return Err(EpisodeError::EmptyInstruction { episode_index });
        }
        if frames.len() < 2 {
            return Err(EpisodeError::TooShort {
                episode_index,
                found: frames.len(),
            });
        }
        for (expected, frame) in frames.iter().enumerate() {
            let expected = expected as u32;
            if frame.timestep != expected {
                return Err(EpisodeError::TimestepGap {
                    episode_index,
                    expected,
                    found: frame.timestep,
                });
            }
            if frame.width == 0 || frame.height == 0 {
                return Err(EpisodeError::ZeroSizedFrame {
                    episode_index,
                    timestep: frame.timestep,
                });
            }
        }
        Ok(Self {
            episode_index,
            instruction,
            frames,
        })
    }

    pub fn episode_index(&self) -> u64 {
        self.episode_index
    }

    pub fn instruction(&self) -> &str {
        &self.instruction
    }

    pub fn frames(&self) -> &[FrameRef] {
        &self.frames
    }

    /// Number of frames `T` (always at least 2).
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first_frame(&self) -> &FrameRef {
        &self.frames[0]
    }
}

#[cfg(test)]
pub(crate) fn synthetic_episode(episode_index: u64, len: u32) -> EpisodeRecord {
    use alloc::format;
    let frames = (0..len)
        .map(|t| FrameRef {
            timestep: t,
            image_path: format!("episodes/{episode_index}/frames/{t:06}.png"),
            width: 64,
            height: 48,
        })
        .collect();
    EpisodeRecord::new(episode_index, "open the door", frames).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn frame(t: u32) -> FrameRef {
        FrameRef {
            timestep: t,
            image_path: String::from("x.png"),
            width: 4,
            height: 4,
        }
    }

    #[test]
    fn single_frame_is_rejected() {
        let err = EpisodeRecord::new(3, "open the door", vec![frame(0)]).unwrap_err();
        assert_eq!(
            err,
            EpisodeError::TooShort {
                episode_index: 3,
                found: 1
            }
        );
    }

    #[test]
    fn gaps_and_blank_instructions_are_rejected() {
        let err = EpisodeRecord::new(0, "go", vec![frame(0), frame(2)]).unwrap_err();
        assert!(matches!(err, EpisodeError::TimestepGap { expected: 1, found: 2, .. }));
        let err = EpisodeRecord::new(0, "  ", vec![frame(0), frame(1)]).unwrap_err();
        assert!(matches!(err, EpisodeError::EmptyInstruction { .. }));
    }

    #[test]
    fn ninety_frame_episode() {
        let ep = synthetic_episode(7, 90);
        assert_eq!(ep.len(), 90);
        assert_eq!(ep.first_frame().timestep, 0);
    }
}
