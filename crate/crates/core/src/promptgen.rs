//! Rendering of an evaluation task into an interleaved text/image prompt.
//!
//! The layout, in order:
//!
//! 1. preamble naming the task instruction
//! 2. `Initial robot scene:` followed by the first frame of the evaluated episode,
//!    anchored at 0%
//! 3. every context frame, numbered from 1 across all context episodes, with its
//!    label at one decimal
//! 4. the answer instructions, including the expected response line format
//! 5. the evaluated frames, numbered after the last context frame, without labels
//!
//! Images are opaque slots here; encoding belongs to the HTTP client.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use sha2::{Digest, Sha256};

use crate::episode::FrameRef;
use crate::sampler::ShuffledSelection;

/// Everything needed to build one prompt.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalTask {
    pub instruction: String,
    pub starting_frame: FrameRef,
    /// Labeled demonstrations; the number of entries is the shot count.
    pub context: Vec<ShuffledSelection>,
    /// Frames to be predicted. Their labels are never rendered.
    pub eval: ShuffledSelection,
}

impl EvalTask {
    pub fn shots(&self) -> usize {
        self.context.len()
    }

    pub fn context_frame_count(&self) -> usize {
        self.context.iter().map(ShuffledSelection::len).sum()
    }

    /// Number given to the first evaluated frame (`context frames + 1`).
    pub fn first_eval_frame_number(&self) -> u32 {
        self.context_frame_count() as u32 + 1
    }

    pub fn eval_frame_count(&self) -> usize {
        self.eval.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PromptPart {
    Text(String),
    Image(FrameRef),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PromptSequence {
    parts: Vec<PromptPart>,
}

impl PromptSequence {
    pub fn parts(&self) -> &[PromptPart] {
        &self.parts
    }

    pub fn image_count(&self) -> usize {
        self.parts
            .iter()
            .filter(|p| matches!(p, PromptPart::Image(_)))
            .count()
    }

    pub fn images(&self) -> impl Iterator<Item = &FrameRef> {
        self.parts.iter().filter_map(|p| match p {
            PromptPart::Image(f) => Some(f),
            PromptPart::Text(_) => None,
        })
    }

    /// All text with each image replaced by an `[IMAGE]` line. This is the
    /// golden fixture format.
    pub fn golden_text(&self) -> String {
        let mut out = String::new();
        for part in &self.parts {
            match part {
                PromptPart::Text(t) => out.push_str(t),
                PromptPart::Image(_) => out.push_str(IMAGE_SENTINEL),
            }
        }
        out
    }

    fn push_text(&mut self, text: &str) {
        if let Some(PromptPart::Text(last)) = self.parts.last_mut() {
            last.push_str(text);
        } else {
            self.parts.push(PromptPart::Text(String::from(text)));
        }
    }

    fn push_image(&mut self, frame: &FrameRef) {
        self.parts.push(PromptPart::Image(frame.clone()));
    }
}

pub const IMAGE_SENTINEL: &str = "[IMAGE]\n";

/// Marks the start of the evaluated frames. The mock endpoint keys on it.
pub const EVAL_SECTION_MARKER: &str = "Remember that the frames are presented in random order.";

pub fn build_prompt(task: &EvalTask) -> PromptSequence {
    let mut p = PromptSequence::default();
    p.push_text(&format!(
        "You are an expert roboticist tasked to predict task completion percentages for frames of a robot for the task of {}. \
The task completion percentages are between 0 and 100, where 100 corresponds to full task completion. \
We provide several examples of the robot performing the task at various stages and their corresponding task completion percentages. \
Note that these frames are in random order, so please pay attention to the individual frames when reasoning about task completion percentage.\n\n",
        task.instruction
    ));
    p.push_text("Initial robot scene:\n");
    p.push_image(&task.starting_frame);
    p.push_text("In the initial robot scene, the task completion percentage is 0.\n\n");

    let mut number = 1u32;
    for selection in &task.context {
        for labeled in &selection.frames {
            p.push_text(&format!("Frame {number}:\n"));
            p.push_image(&labeled.frame);
            p.push_text(&format!(
                "Task Completion Percentage: {}%\n\n",
                format_percent(labeled.true_progress)
            ));
            number += 1;
        }
    }

    p.push_text(&format!(
        "Now, for the task of {}, output the task completion percentage for the following frames that are presented in random order.\n",
        task.instruction
    ));
    p.push_text("For each frame, format your response as follows: \n");
    p.push_text("Frame {i}: Description:{}, Task Completion Percentages: {}%\n\n");
    p.push_text("Be rigorous, precise and remember that the task completion percentage is the percentage of the task that has been completed.\n\n");
    p.push_text(EVAL_SECTION_MARKER);
    p.push_text("\n\n");

    for labeled in &task.eval.frames {
        p.push_text(&format!("Frame {number}:\n"));
        p.push_image(&labeled.frame);
        number += 1;
    }
    p
}

/// One decimal place, ties to even on the exact binary value.
pub fn format_percent(value: f64) -> String {
    format!("{value:.1}")
}

/// SHA-256 (hex) of [`PromptSequence::golden_text`].
pub fn golden_digest(prompt: &PromptSequence) -> String {
    let digest = Sha256::digest(prompt.golden_text().as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest.iter() {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}
