use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gvl::client::{Credentials, EndpointConfig, VlmClient, API_KEY_ENV};
use gvl::fixture::{write_fixture, FixtureSpec};
use gvl::mockvlm::{MockConfig, MockServer};
use gvl::pipeline::run_evaluation;
use gvl::report::{emit_report, outlier_listing, DatasetReport, Formats, RunConfig, OUTLIERS_FILE};
use gvl_core::metrics::RankMethod;
use gvl_core::oracle::{OracleMode, OracleSpec};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "gvl", version, about = "Score vision-language models as zero-shot progress estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Query an endpoint for every selected episode and write a report.
    Evaluate(Box<EvaluateArgs>),
    /// Recompute a stored report from its raw replies.
    Report(ReportArgs),
    /// List outlier episodes of a stored report.
    Outliers(OutliersArgs),
    /// Serve the deterministic mock endpoint until interrupted.
    MockServe(MockArgs),
    /// Write a synthetic labelled dataset.
    MakeFixture(FixtureArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Spearman,
    Kendall,
}

impl From<Method> for RankMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Spearman => RankMethod::Spearman,
            Method::Kendall => RankMethod::Kendall,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// JSON file with defaults for any of these flags, plus `api_key`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible API, e.g. http://host:8000/v1
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    shots: Option<usize>,
    /// Evaluate the first N episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Explicit episode indices; overrides --episodes.
    #[arg(long, value_delimiter = ',')]
    episode_indices: Option<Vec<u64>>,
    /// Frames sampled from each evaluated episode.
    #[arg(long)]
    frames: Option<usize>,
    /// Frames sampled from each context episode (default: --frames).
    #[arg(long)]
    context_frames: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    image_max_edge: Option<u32>,
    #[arg(long)]
    retries: Option<u32>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    outlier_k: Option<f64>,
}

/// Contents of `--config`. Command-line flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset: Option<PathBuf>,
    endpoint: Option<String>,
    model: Option<String>,
    shots: Option<usize>,
    episodes: Option<usize>,
    episode_indices: Option<Vec<u64>>,
    frames: Option<usize>,
    context_frames: Option<usize>,
    method: Option<RankMethod>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    temperature: Option<f64>,
    max_tokens: Option<u32>,
    image_max_edge: Option<u32>,
    retries: Option<u32>,
    concurrency: Option<usize>,
    timeout_secs: Option<u64>,
    outlier_k: Option<f64>,
    api_key: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Write report.csv and series.csv.
    #[arg(long)]
    csv: bool,
    /// Rewrite report.json.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OutliersArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = gvl_core::curation::DEFAULT_OUTLIER_K)]
    k: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Perfect,
    Noisy,
    Constant,
    Reversed,
    Mismatching,
    Empty,
}

#[derive(Args)]
struct MockArgs {
    #[arg(long, default_value_t = 8089)]
    port: u16,
    #[arg(long, value_enum, default_value = "perfect")]
    mode: Mode,
    /// Noise standard deviation in percentage points (noisy mode).
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    delay_ms: u64,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "synthetic")]
    dataset_id: String,
    #[arg(long, default_value_t = 20)]
    episodes: u64,
    #[arg(long, default_value_t = 40)]
    frames: u32,
    #[arg(long, default_value_t = 64)]
    width: u32,
    #[arg(long, default_value_t = 48)]
    height: u32,
}

fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

async fn evaluate(args: EvaluateArgs) -> Result<()> {
    let file = match &args.config {
        Some(p) => load_file_config(p)?,
        None => FileConfig::default(),
    };
    let Some(dataset) = args.dataset.or(file.dataset) else { bail!("--dataset is required") };
    let Some(endpoint) = args.endpoint.or(file.endpoint) else { bail!("--endpoint is required") };
    let Some(model) = args.model.or(file.model) else { bail!("--model is required") };
    let Some(out) = args.out.or(file.out) else { bail!("--out is required") };

    let mut run = RunConfig::new(dataset, &endpoint, &model);
    run.shots = args.shots.or(file.shots).unwrap_or(run.shots);
    run.episodes_per_dataset = args.episodes.or(file.episodes).unwrap_or(run.episodes_per_dataset);
    run.episode_indices = args.episode_indices.or(file.episode_indices);
    run.frames_per_episode = args.frames.or(file.frames).unwrap_or(run.frames_per_episode);
    run.context_frames = args.context_frames.or(file.context_frames).unwrap_or(run.frames_per_episode);
    run.method = args.method.map(Into::into).or(file.method).unwrap_or(run.method);
    run.global_seed = args.seed.or(file.seed).unwrap_or(run.global_seed);
    run.temperature = args.temperature.or(file.temperature).unwrap_or(run.temperature);
    run.max_output_tokens = args.max_tokens.or(file.max_tokens).unwrap_or(run.max_output_tokens);
    run.image_max_edge = args.image_max_edge.or(file.image_max_edge).unwrap_or(run.image_max_edge);
    run.outlier_k = args.outlier_k.or(file.outlier_k).unwrap_or(run.outlier_k);
    if run.frames_per_episode == 0 || run.context_frames == 0 {
        bail!("frame counts must be at least 1");
    }

    let mut endpoint_cfg = EndpointConfig::new(&endpoint, &model)?;
    endpoint_cfg.temperature = run.temperature;
    endpoint_cfg.max_output_tokens = run.max_output_tokens;
    endpoint_cfg.image_max_edge = run.image_max_edge;
    if let Some(r) = args.retries.or(file.retries) {
        endpoint_cfg.max_retries = r;
    }
    if let Some(c) = args.concurrency.or(file.concurrency) {
        endpoint_cfg.max_concurrency = c;
    }
    if let Some(t) = args.timeout_secs.or(file.timeout_secs) {
        endpoint_cfg.request_timeout = Duration::from_secs(t);
    }
    endpoint_cfg.validate()?;

    let credentials = Credentials::from_env().or(file.api_key.map(Credentials::new));
    if credentials.is_none() {
        tracing::info!("{API_KEY_ENV} not set; sending requests without authorization");
    }
    let client = VlmClient::new(endpoint_cfg, credentials)?;
    let report = run_evaluation(run, client, &out).await?;
    print!("{}", report.csv_row());
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let stored = DatasetReport::load(&args.input)?;
    let fresh = stored.recompute_from_raw(&args.input)?;
    if fresh.stats != stored.stats {
        tracing::warn!(stored = ?stored.stats, recomputed = ?fresh.stats, "stored stats differ from recomputation");
    }
    let (json, csv) = if args.json || args.csv { (args.json, args.csv) } else { (true, true) };
    let written = emit_report(
        &fresh,
        &args.input,
        Formats {
            json,
            csv,
            series: csv,
        },
    )?;
    for path in written {
        tracing::info!(path = %path.display(), "wrote");
    }
    print!("{}", fresh.csv_row());
    Ok(())
}

fn outliers(args: OutliersArgs) -> Result<()> {
    let stored = DatasetReport::load(&args.input)?;
    let listing = outlier_listing(&stored, args.k);
    let path = args.input.join(OUTLIERS_FILE);
    let mut json = serde_json::to_string_pretty(&listing)?;
    json.push('\n');
    std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    print!("{}", listing.human());
    Ok(())
}

async fn mock_serve(args: MockArgs) -> Result<()> {
    let mode = match args.mode {
        Mode::Perfect => OracleMode::Perfect,
        Mode::Noisy => OracleMode::Noisy,
        Mode::Constant => OracleMode::Constant,
        Mode::Reversed => OracleMode::Reversed,
        Mode::Mismatching => OracleMode::Mismatching,
        Mode::Empty => OracleMode::Empty,
    };
    let oracle = OracleSpec {
        mode,
        noise_sigma: args.sigma,
        seed: args.seed,
    };
    let server = MockServer::start(
        MockConfig {
            oracle,
            script: Vec::new(),
            delay: Duration::from_millis(args.delay_ms),
        },
        args.port,
    )
    .await?;
    println!("{}", server.base_url());
    tokio::signal::ctrl_c().await?;
    server.shutdown().await;
    Ok(())
}

fn make_fixture(args: FixtureArgs) -> Result<()> {
    let mut spec = FixtureSpec::new(&args.dataset_id, args.episodes, args.frames);
    spec.width = args.width;
    spec.height = args.height;
    if args.frames < 2 {
        bail!("episodes need at least 2 frames");
    }
    write_fixture(&args.out, &spec).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .init();
    match Cli::parse().command {
        Command::Evaluate(a) => evaluate(*a).await,
        Command::Report(a) => report(a),
        Command::Outliers(a) => outliers(a),
        Command::MockServe(a) => mock_serve(a).await,
        Command::MakeFixture(a) => make_fixture(a),
    }
}
