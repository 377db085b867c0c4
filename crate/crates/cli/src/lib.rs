//! Command-line front end: clip generation, degradation, training,
//! enhancement, evaluation, matrix export and bitrate scaling.
//!
//! Every command writes a [`RunManifest`]; `replay` re-runs one.

mod commands;
pub mod config;
pub mod manifest;
pub mod report;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hfur_core::codec::Layout;
use hfur_core::nn::Upsampler;

pub use manifest::{RunManifest, MANIFEST_FILE};

/// Reference geometry and frame rate that bitrates are quoted for.
pub const REFERENCE_RATE: (f64, f64, f64) = (30.0, 960.0, 536.0);

/// Bitrate scaled linearly in frame rate and pixel count from the reference.
pub fn scaled_bitrate(fps: f64, width: f64, height: f64, base_kbps: f64) -> Result<f64> {
    if !(fps > 0.0 && width > 0.0 && height > 0.0 && base_kbps > 0.0) {
        bail!("bitrate arguments must be positive");
    }
    let (rf, rw, rh) = REFERENCE_RATE;
    Ok(fps * width * height / (rf * rw * rh) * base_kbps)
}

#[derive(Debug, Parser)]
#[command(name = "hfur", version, about = "Compressed video enhancement toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command. Flags beat values from `--config`.
#[derive(Clone, Debug, Default, Args)]
pub struct Common {
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with `[network]` and `[train]` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Geometry for raw `.yuv` inputs; PGM directories describe themselves.
#[derive(Clone, Debug, Default, Args)]
pub struct Geometry {
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long, value_enum)]
    pub layout: Option<LayoutArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Mono,
    Yuv420,
    Yuv444,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Mono => Layout::Mono,
            LayoutArg::Yuv420 => Layout::Yuv420,
            LayoutArg::Yuv444 => Layout::Yuv444,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum UpsamplerArg {
    ImpFreqUp,
    SubPixel,
    Nearest,
}

impl From<UpsamplerArg> for Upsampler {
    fn from(u: UpsamplerArg) -> Self {
        match u {
            UpsamplerArg::ImpFreqUp => Upsampler::ImpFreqUp,
            UpsamplerArg::SubPixel => Upsampler::SubPixel,
            UpsamplerArg::Nearest => Upsampler::Nearest,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Small network for desk-scale runs.
    Test,
    /// Full-size network.
    Paper,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic clip as a PGM sequence.
    Gen {
        #[command(flatten)]
        common: Common,
        /// gradient, checker, moving-edge or noise-texture.
        #[arg(long, default_value = "moving-edge")]
        kind: String,
        #[arg(long, default_value_t = 5)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
    },
    /// Compress a clip with the block-DCT simulator and write ground truth.
    Degrade {
        #[command(flatten)]
        common: Common,
        /// PGM directory or raw `.yuv` file.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        geometry: Geometry,
        #[arg(long, value_parser = clap::value_parser!(i32).range(0..=51))]
        qp: i32,
        /// Per-block QP spread standing in for rate control.
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(i32).range(0..=10))]
        cbr_jitter: i32,
        /// Quantization tables as `luma.txt[,chroma.txt]`; flat when omitted.
        #[arg(long)]
        table: Option<String>,
    },
    /// Train a network on source/degraded clip pairs.
    Train {
        #[command(flatten)]
        common: Common,
        /// Source clip; repeat once per clip.
        #[arg(long, required = true)]
        source: Vec<PathBuf>,
        /// Degraded clip, paired with `--source` by position.
        #[arg(long, required = true)]
        degraded: Vec<PathBuf>,
        #[command(flatten)]
        geometry: Geometry,
        #[arg(long, value_enum, default_value = "test")]
        profile: Profile,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        crop: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        val_every: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long, value_enum)]
        upsampler: Option<UpsamplerArg>,
        #[arg(long)]
        no_hir: bool,
        /// Checkpoint whose name- and shape-matched tensors seed the run.
        #[arg(long)]
        init_from: Option<PathBuf>,
    },
    /// Restore a degraded clip with a trained checkpoint.
    Enhance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        geometry: Geometry,
    },
    /// Score enhanced clips against sources.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires_all = ["degraded", "enhanced"], conflicts_with = "clips")]
        source: Option<PathBuf>,
        #[arg(long)]
        degraded: Option<PathBuf>,
        #[arg(long)]
        enhanced: Option<PathBuf>,
        /// TOML list of `[[clip]]` entries with name, class, source, degraded, enhanced.
        #[arg(long)]
        clips: Option<PathBuf>,
        #[command(flatten)]
        geometry: Geometry,
        /// CSV report; a text rendering is written beside it.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write DCT bases, the fractional IDCT and quantization tables as CSV.
    ExportMatrices {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8)]
        block_size: usize,
        #[arg(long, default_value_t = 2)]
        factor: usize,
        #[arg(long, default_value_t = 37, value_parser = clap::value_parser!(i32).range(0..=51))]
        qp: i32,
        #[arg(long)]
        table: Option<String>,
    },
    /// Scale a reference bitrate to another frame rate and resolution.
    Bitrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fps: f64,
        #[arg(long)]
        width: f64,
        #[arg(long)]
        height: f64,
        #[arg(long)]
        base_kbps: f64,
    },
    /// Re-run a command from its manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory replacing the recorded one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// What a finished command reports back for its manifest.
pub(crate) struct Outcome {
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Where the manifest goes; printed to stderr when absent.
    pub manifest: Option<PathBuf>,
}

/// Parses `args` (without the program name) and runs the command.
pub fn run(args: &[String]) -> Result<RunManifest> {
    let cli = Cli::try_parse_from(std::iter::once("hfur".to_string()).chain(args.iter().cloned()))?;
    match cli.command {
        Command::Replay { manifest, out } => replay(&manifest, out),
        command => execute(command, args.to_vec(), None),
    }
}

fn replay(path: &std::path::Path, out: Option<PathBuf>) -> Result<RunManifest> {
    let m = RunManifest::load(path)?;
    let mut args = m.args.clone();
    if let Some(out) = out {
        args = replace_flag(&args, "--out", &out.to_string_lossy());
    }
    let cli = Cli::try_parse_from(std::iter::once("hfur".to_string()).chain(args.iter().cloned()))?;
    if matches!(cli.command, Command::Replay { .. }) {
        bail!("{}: a replay manifest cannot name another replay", path.display());
    }
    execute(cli.command, args, Some(m.config))
}

/// Sets `flag` to `value`, appending it when absent.
pub fn replace_flag(args: &[String], flag: &str, value: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len() + 2);
    let mut found = false;
    let mut it = args.iter();
    let prefix = format!("{flag}=");
    while let Some(a) = it.next() {
        if a == flag {
            it.next();
            out.extend([flag.to_string(), value.to_string()]);
            found = true;
        } else if a.starts_with(&prefix) {
            out.push(format!("{prefix}{value}"));
            found = true;
        } else {
            out.push(a.clone());
        }
    }
    if !found {
        out.extend([flag.to_string(), value.to_string()]);
    }
    out
}

fn execute(command: Command, args: Vec<String>, snapshot: Option<serde_json::Value>) -> Result<RunManifest> {
    let name = command_name(&command).to_string();
    let start = Instant::now();
    let outcome = commands::dispatch(command, snapshot)?;
    if let Some(missing) = outcome.outputs.iter().find(|p| !p.exists()) {
        bail!("{name} finished but did not produce {}", missing.display());
    }
    let manifest = RunManifest {
        command: name,
        args,
        config: outcome.config,
        seed: outcome.seed,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        duration_secs: start.elapsed().as_secs_f64(),
    };
    match &outcome.manifest {
        Some(path) => manifest.save(path)?,
        None => eprintln!("{}", serde_json::to_string_pretty(&manifest)?),
    }
    Ok(manifest)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Gen { .. } => "gen",
        Command::Degrade { .. } => "degrade",
        Command::Train { .. } => "train",
        Command::Enhance { .. } => "enhance",
        Command::Eval { .. } => "eval",
        Command::ExportMatrices { .. } => "export-matrices",
        Command::Bitrate { .. } => "bitrate",
        Command::Replay { .. } => "replay",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitrate_examples() {
        assert_eq!(scaled_bitrate(30.0, 960.0, 536.0, 800.0).unwrap(), 800.0);
        assert_eq!(scaled_bitrate(30.0, 1920.0, 1072.0, 800.0).unwrap(), 3200.0);
        assert_eq!(scaled_bitrate(15.0, 960.0, 536.0, 800.0).unwrap(), 400.0);
        assert!(scaled_bitrate(0.0, 960.0, 536.0, 800.0).is_err());
        assert!(scaled_bitrate(30.0, 960.0, -1.0, 800.0).is_err());
    }

    #[test]
    fn replace_flag_forms() {
        let a: Vec<String> = ["gen", "--out", "a", "--seed=3"].map(String::from).to_vec();
        assert_eq!(replace_flag(&a, "--out", "b"), ["gen", "--out", "b", "--seed=3"]);
        assert_eq!(replace_flag(&a, "--seed", "4"), ["gen", "--out", "a", "--seed=4"]);
        assert_eq!(replace_flag(&a[..1], "--out", "c"), ["gen", "--out", "c"]);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
