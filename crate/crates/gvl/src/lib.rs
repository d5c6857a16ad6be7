//! Dataset IO, the chat-completions client, a deterministic mock endpoint and
//! the evaluation pipeline built on `gvl-core`.

#![forbid(unsafe_code)]

pub mod client;
pub mod fixture;
pub mod ingest;
pub mod mockvlm;
pub mod pipeline;
pub mod report;

pub use gvl_core as core;
