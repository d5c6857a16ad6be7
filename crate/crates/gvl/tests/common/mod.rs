#![allow(dead_code)]

use std::path::Path;
use std::time::Duration;

use gvl::client::{EndpointConfig, VlmClient};
use gvl::fixture::{write_fixture, FixtureSpec};
use gvl::ingest::open_dataset;
use gvl::pipeline::prepare_task;
use gvl::report::RunConfig;
use gvl_core::promptgen::{build_prompt, PromptSequence};

pub fn fixture(dir: &Path, episodes: u64, frames: u32) {
    write_fixture(dir, &FixtureSpec::new("synthetic", episodes, frames)).unwrap();
}

pub fn run_config(dataset: &Path, base_url: &str, shots: usize, episodes: usize) -> RunConfig {
    let mut cfg = RunConfig::new(dataset, base_url, "mock");
    cfg.shots = shots;
    cfg.episodes_per_dataset = episodes;
    cfg
}

pub fn endpoint(base_url: &str) -> EndpointConfig {
    let mut cfg = EndpointConfig::new(base_url, "mock").unwrap();
    cfg.backoff_base = Duration::from_millis(20);
    cfg.request_timeout = Duration::from_secs(30);
    cfg
}

pub fn client(base_url: &str) -> VlmClient {
    VlmClient::new(endpoint(base_url), None).unwrap()
}

/// Zero-shot prompt for episode 0 of a small fixture written under `dir`.
pub fn small_prompt(dir: &Path) -> PromptSequence {
    fixture(dir, 2, 6);
    let handle = open_dataset(dir).unwrap();
    let mut cfg = run_config(dir, "http://unused/v1", 0, 1);
    cfg.frames_per_episode = 4;
    build_prompt(&prepare_task(&handle, &cfg, 0).unwrap())
}
