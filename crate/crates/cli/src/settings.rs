//! Flags and config resolution shared by the subcommands.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use tonebridge_core::backends::{BackendKind, Backends};
use tonebridge_core::config::AppConfig;
use tonebridge_core::templates::TemplateStore;

use crate::Failure;

#[derive(Debug, Parser)]
#[command(name = "tonebridge", version, about = "Visual-to-music generation and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn one image or frame directory into music.
    Generate(GenerateArgs),
    /// Score generated audio listed in a manifest.
    Eval(EvalArgs),
    /// Run the HTTP job service.
    Serve(ServeArgs),
    /// Serve the deterministic mock backends over HTTP.
    MockBackends(MockArgs),
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Backend override, e.g. `llm=http://127.0.0.1:9000` or `music=mock://`.
    /// Repeatable.
    #[arg(long = "backend", value_name = "KIND=URL", value_parser = parse_backend)]
    pub backends: Vec<(BackendKind, String)>,
}

fn parse_backend(s: &str) -> Result<(BackendKind, String), String> {
    let (kind, url) = s.split_once('=').ok_or("expected KIND=URL")?;
    let kind = kind.parse::<BackendKind>().map_err(|e| e.to_string())?;
    if url.trim().is_empty() {
        return Err("URL is empty".to_string());
    }
    Ok((kind, url.trim().to_string()))
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Image file, frame directory, or video file (needs a decoder in the config).
    #[arg(long)]
    pub input: PathBuf,
    /// Output WAV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the provenance trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Extra guidance appended to the bridge request.
    #[arg(long)]
    pub prompt: Option<String>,
    /// Frames sampled from a video source.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Requested music length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Send the caption to the music backend unchanged.
    #[arg(long)]
    pub bypass_bridge: bool,
    /// Record zero wall times so identical requests give identical traces.
    #[arg(long)]
    pub no_timing: bool,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSONL manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report path; `.json` is written, plus `.md` with `--format md`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "json", value_parser = ["json", "md"])]
    pub format: String,
    /// Comma-separated subset of fad,kl,ibrank.
    #[arg(long, default_value = "fad,kl,ibrank")]
    pub metrics: String,
    /// Precomputed reference-audio embeddings.
    #[arg(long)]
    pub reference_embeddings: Option<PathBuf>,
    /// Precomputed visual-input embeddings.
    #[arg(long)]
    pub media_embeddings: Option<PathBuf>,
    /// Precomputed generated-audio embeddings for one system. Repeatable.
    #[arg(long = "generated-embeddings", value_name = "SYSTEM=PATH")]
    pub generated_embeddings: Vec<String>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Job workspace directory (overrides the config).
    #[arg(long)]
    pub workspace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MockArgs {
    #[arg(long, default_value_t = 9090)]
    pub port: u16,
}

/// Loads the config file (or defaults) and applies `--backend` overrides.
/// With neither a config nor overrides, every backend is the in-process mock.
pub fn resolve(args: &BackendArgs) -> Result<AppConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    for (kind, url) in &args.backends {
        config.set_backend(*kind, url.clone());
    }
    if args.config.is_none() && args.backends.is_empty() {
        config.fill_missing_with_mock();
    }
    config.validate()?;
    Ok(config)
}

pub fn build(config: &AppConfig, required: &[BackendKind]) -> Result<(TemplateStore, Backends), Failure> {
    let templates = config.templates()?;
    let backends = config.build_backends(&templates)?;
    backends.require(required).map_err(|e| {
        Failure(format!(
            "{e} (set it in the config or pass --backend {}=URL)",
            missing(&backends, required)
        ))
    })?;
    Ok((templates, backends))
}

fn missing(backends: &Backends, required: &[BackendKind]) -> &'static str {
    required
        .iter()
        .find(|k| backends.require(&[**k]).is_err())
        .map_or("KIND", |k| k.as_str())
}
