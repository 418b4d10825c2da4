//! `codedstereo` command-line front end.

// `!(x > 0.0)` style checks are meant to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use codedstereo::Error;

use run::Provenance;

/// Coded-aperture stereo simulation, reconstruction and mask optimization.
#[derive(Debug, Parser)]
#[command(name = "codedstereo", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Export the PSF stack of a mask as 16-bit PNGs plus a moments table.
    Psf(PsfArgs),
    /// Render coded stereo pairs for the scenes of a manifest.
    Render(RenderArgs),
    /// Recover EDOF texture and disparity from a coded pair.
    Recon(ReconArgs),
    /// Disparity and confidence of a coded pair.
    Stereo(StereoArgs),
    /// Optimize a mask's Zernike coefficients against the combined loss.
    Optimize(OptimizeArgs),
    /// Equal-SNR exposure / F-number / depth-of-field curve.
    Tradeoff(TradeoffArgs),
    /// Compare masks against flat F8 and F32 lenses, optionally with a loss-weight ablation.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (falls back to the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured F-number.
    #[arg(long)]
    f_number: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct MaskArgs {
    /// flat, cubic, fisher, random or a mask file path [default: the
    /// config's mask_file, else flat].
    #[arg(long)]
    mask: Option<String>,
    /// Cubic mask strength.
    #[arg(long, default_value_t = 30.0)]
    alpha: f64,
    /// Adam iterations when designing a Fisher mask.
    #[arg(long, default_value_t = 30)]
    fisher_iters: usize,
    /// Coefficient standard deviation (m) of a random mask.
    #[arg(long, default_value_t = 100e-9)]
    random_scale: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    /// Scene manifest (falls back to the config's scene_manifest).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Use N synthetic two-plane scenes instead of a manifest.
    #[arg(long)]
    toy: Option<usize>,
    /// Size of synthetic scenes, HxW.
    #[arg(long, default_value = "128x320")]
    toy_size: String,
    /// Crop manifest scenes to HxW.
    #[arg(long)]
    crop: Option<String>,
    /// Seed of the crop placement (centered when absent).
    #[arg(long)]
    crop_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PsfArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    mask: MaskArgs,
    /// Seed of random and Fisher mask initialization.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    mask: MaskArgs,
    #[command(flatten)]
    scenes: SceneArgs,
    /// Noise standard deviation (fraction of full scale).
    #[arg(long)]
    sigma: Option<f64>,
    /// Seed of noise, synthetic scenes and random masks (falls back to the config's seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    /// Coded left view (PNG).
    #[arg(long)]
    left: PathBuf,
    /// Coded right view (PNG).
    #[arg(long)]
    right: PathBuf,
    /// Ground-truth scene manifest for metrics.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Index of the scene in the ground-truth manifest.
    #[arg(long, default_value_t = 0)]
    scene: usize,
    /// Matching window half-width.
    #[arg(long, default_value_t = codedstereo::recon::DEFAULT_BLOCK_RADIUS)]
    block_radius: usize,
    /// Largest disparity searched (defaults to the configured range).
    #[arg(long)]
    max_disp: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReconArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    mask: MaskArgs,
    #[command(flatten)]
    pair: PairArgs,
    /// EDOF mode: single or layered.
    #[arg(long, default_value = "layered")]
    mode: String,
    /// Noise level of the coded images, used to estimate the Wiener NSR.
    #[arg(long)]
    sigma: Option<f64>,
    /// Fixed Wiener noise-to-signal ratio.
    #[arg(long)]
    nsr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StereoArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    pair: PairArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    /// Initial mask (flat, cubic, fisher, random or a mask file).
    #[command(flatten)]
    mask: MaskArgs,
    #[command(flatten)]
    scenes: SceneArgs,
    /// Adam iterations.
    #[arg(long, default_value_t = 50)]
    iters: usize,
    /// Peak learning rate (m per coefficient).
    #[arg(long, default_value_t = codedstereo::optimize::DEFAULT_LEARNING_RATE)]
    lr: f64,
    /// Finite-difference step (m per coefficient).
    #[arg(long, default_value_t = codedstereo::optimize::DEFAULT_FD_STEP)]
    fd_step: f64,
    /// Scenes per iteration, cycled round-robin (0 = all).
    #[arg(long, default_value_t = 0)]
    batch_size: usize,
    /// Texture loss weight.
    #[arg(long)]
    gamma: Option<f64>,
    /// Disparity pyramid weights, `a0,a1,a2`.
    #[arg(long)]
    alpha_weights: Option<String>,
    /// Noise standard deviation (fraction of full scale).
    #[arg(long)]
    sigma: Option<f64>,
    /// Seed of noise, synthetic scenes and random masks (falls back to the config's seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TradeoffArgs {
    #[command(flatten)]
    common: Common,
    /// Target SNR in dB.
    #[arg(long, default_value_t = 50.0)]
    snr: f64,
    /// Exposure grid `start:stop:count` (seconds, linear spacing).
    #[arg(long, default_value = "1:16:16")]
    exposures: String,
    /// Circle of confusion (m); defaults to one sensor pixel.
    #[arg(long)]
    coc: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Mask to compare, `name=spec` (repeatable); spec as for --mask.
    #[arg(long = "compare")]
    compare: Vec<String>,
    /// Cubic mask strength of the built-in cubic row.
    #[arg(long, default_value_t = 30.0)]
    alpha: f64,
    #[command(flatten)]
    scenes: SceneArgs,
    /// DOF threshold in dB (calibrated from the curves when absent).
    #[arg(long)]
    threshold: Option<f64>,
    /// Loss-weight ablation: comma-separated gammas, `rgb-only` allowed.
    #[arg(long)]
    gammas: Option<String>,
    /// Adam iterations per ablation column.
    #[arg(long, default_value_t = 50)]
    iters: usize,
    /// Scenes per ablation iteration, cycled round-robin (0 = all).
    #[arg(long, default_value_t = 0)]
    batch_size: usize,
    /// Noise standard deviation (fraction of full scale).
    #[arg(long)]
    sigma: Option<f64>,
    /// Seed of noise, synthetic scenes and random masks (falls back to the config's seed).
    #[arg(long)]
    seed: Option<u64>,
}

fn configure_threads() -> Result<usize, Error> {
    let threads = match std::env::var("CODEDSTEREO_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Usage(format!("CODEDSTEREO_THREADS must be a non-negative integer, got `{v}`")))?,
        Err(_) => 0,
    };
    // the global pool can only be built once; a second build is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(rayon::current_num_threads())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let threads = match configure_threads() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let mut provenance = Provenance::start(&argv, threads);
    let result = commands::dispatch(cli.command, &mut provenance);
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    if let Err(e) = provenance.finish(&result) {
        eprintln!("error: could not write run.txt: {e}");
        if code == 0 {
            return ExitCode::from(e.exit_code() as u8);
        }
    }
    ExitCode::from(code as u8)
}
