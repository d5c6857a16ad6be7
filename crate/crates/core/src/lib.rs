//! Scoring core for temporal progress prediction on robot demonstrations.
//!
//! A vision-language model is shown frames of an episode in shuffled order and
//! asked for a task-completion percentage per frame. This crate holds every piece
//! of that loop that is pure computation:
//!
//! - [`sampler`]: ground-truth progress labels, seeded frame sampling and shuffling
//! - [`promptgen`]: the interleaved text/image prompt
//! - [`parser`]: extraction of per-frame percentages from free-form replies
//! - [`metrics`]: rank statistics, value-order correlation (VOC) and aggregation
//! - [`curation`]: quality bands, outlier flags and curation hints
//! - [`oracle`]: a deterministic stand-in model used for offline testing
//! - [`eval`]: glue that turns episodes into tasks and replies into results
//!
//! The crate is `no_std` and only needs `alloc`. Filesystem access, HTTP and
//! report files live in the `gvl` companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod curation;
pub mod episode;
pub mod eval;
pub mod metrics;
pub mod oracle;
pub mod parser;
pub mod promptgen;
pub mod sampler;
pub mod seed;

pub use curation::{
    classify_dataset, curation_summary, flag_outliers, CurationHint, CurationSummary, OutlierFlag,
    OutlierReason, OutlierScan, QualityBand,
};
pub use episode::{EpisodeError, EpisodeRecord, FrameRef};
pub use eval::{
    build_task, failed_result, pick_context_indices, score_response, score_with_permutation,
    EvalError, TaskParams,
};
pub use metrics::{
    aggregate, fractional_ranks, kendall, spearman, voc, AggregateStats, Correlation,
    EpisodeResult, MetricError, RankMethod,
};
pub use oracle::{oracle_predict, OracleMode, OracleSpec};
pub use parser::{parse_predictions, FramePrediction, PredictionSet, ResponseStatus, StatusError};
pub use promptgen::{build_prompt, golden_digest, EvalTask, PromptPart, PromptSequence};
pub use sampler::{
    progress_labels, sample_frames, shuffle, unshuffle, LabeledFrame, Permutation,
    PermutationError, ShuffledSelection,
};
pub use seed::{derive_seed, SeedRole};
