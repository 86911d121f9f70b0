mod commands;
mod run;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use roadmix_core::io::PipelineConfig;
use roadmix_core::losses::RealFakeFlag;
use roadmix_core::metrics::Averaging;
use roadmix_core::synth::BgTexture;

/// Scribble expansion, structure-aware mixing, loss evaluation and metrics
/// for weakly supervised road extraction.
///
/// Exit codes: 0 success, 2 usage or parameter error, 3 data or format
/// error, 4 numeric error (including a failed self-test).
#[derive(Parser, Debug)]
#[command(name = "roadmix", version)]
pub struct Cli {
    /// Pipeline configuration (JSON). Absent keys take their defaults.
    #[arg(long, global = true, env = "ROADMIX_CONFIG")]
    pub config: Option<PathBuf>,

    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Thin full road masks into one-pixel scribbles.
    MakeScribbles {
        /// Directory of road masks (PNG, foreground >= 128).
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expand scribbles into tri-state pseudo-labels.
    ///
    /// Writes ys/, yc/ and y/ label PNGs (0, 128, 255) and a stats/<id>.json
    /// sidecar per image.
    Expand {
        /// Directory of RGB images.
        #[arg(long)]
        images: PathBuf,
        /// Directory of scribble masks, matched to images by file name.
        #[arg(long)]
        scribbles: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build structure-aware mixed pairs.
    ///
    /// Each pair `<a>__<b>/` holds x_m_12.png, x_m_21.png, y_m_12.png,
    /// y_m_21.png, the source labels y1.png and y2.png, and pair.json.
    Mix {
        #[arg(long)]
        images: PathBuf,
        /// Directory of tri-state labels, e.g. the y/ output of `expand`.
        #[arg(long)]
        labels: PathBuf,
        /// A JSON file of `[a, b]` id pairs, or `random:SEED` to pair a
        /// seeded shuffle of all ids.
        #[arg(long)]
        pairs: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the training objective and its gradients on saved tensors.
    LossEval(LossEvalArgs),
    /// Score predictions against ground-truth masks.
    Metrics {
        /// Directory of predictions: <id>.rtb probability tensors or <id>.png masks.
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth masks <id>.png.
        #[arg(long)]
        gt: PathBuf,
        /// Binarization threshold; overrides the configuration.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, value_enum, default_value_t = AveragingArg::Micro)]
        averaging: AveragingArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic road dataset with exact masks and scribbles.
    Synth(SynthArgs),
    /// Tint a label over its image: foreground green, uncertain yellow.
    Overlay {
        #[arg(long)]
        image: PathBuf,
        /// Tri-state label or binary mask PNG.
        #[arg(long)]
        label: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle suites on fresh random fixtures.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the results as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a recorded invocation and check that it reproduces its outputs.
    Replay {
        /// A run.json written by an earlier invocation.
        run: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct LossEvalArgs {
    /// Directory with p1.rtb, p2.rtb, pm12.rtb, pm21.rtb and optionally
    /// d.rtb (discriminator scores, dims [n, n, 2]).
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory with the pair's labels y1.png and y2.png.
    #[arg(long)]
    pub labels: PathBuf,
    /// Directory with y_m_12.png, y_m_21.png and pair.json (for the gate).
    #[arg(long)]
    pub mixed: PathBuf,
    /// Loss weights, e.g. `l1=0.1,l2=0.1`; overrides the configuration.
    #[arg(long)]
    pub weights: Option<String>,
    /// Gate value; overrides pair.json.
    #[arg(long)]
    pub gate: Option<bool>,
    /// What the discriminator scores in d.rtb were computed on.
    #[arg(long, value_enum, default_value_t = FlagArg::Fake)]
    pub adv_flag: FlagArg,
    /// Dump gradients as grad_<name>.rtb into this directory.
    #[arg(long)]
    pub grads: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Side length of the square scenes.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 3)]
    pub roads: usize,
    #[arg(long, default_value_t = 3.0)]
    pub min_width: f64,
    #[arg(long, default_value_t = 8.0)]
    pub max_width: f64,
    #[arg(long, default_value_t = 0.3)]
    pub curvature: f64,
    #[arg(long, value_enum, default_value_t = TextureArg::Noise)]
    pub texture: TextureArg,
    #[arg(long, default_value_t = 2)]
    pub distractors: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AveragingArg {
    Micro,
    Macro,
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::Micro => Averaging::Micro,
            AveragingArg::Macro => Averaging::Macro,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FlagArg {
    Fake,
    Real,
}

impl From<FlagArg> for RealFakeFlag {
    fn from(f: FlagArg) -> Self {
        match f {
            FlagArg::Fake => RealFakeFlag::Fake,
            FlagArg::Real => RealFakeFlag::Real,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TextureArg {
    Flat,
    Noise,
    Blotches,
}

impl From<TextureArg> for BgTexture {
    fn from(t: TextureArg) -> Self {
        match t {
            TextureArg::Flat => BgTexture::Flat,
            TextureArg::Noise => BgTexture::Noise,
            TextureArg::Blotches => BgTexture::Blotches,
        }
    }
}

/// Failures the CLI detects itself, outside the library.
#[derive(Debug)]
pub enum CliError {
    /// Bad flag values found after parsing.
    Usage(String),
    /// Missing or inconsistent input files.
    Data(String),
    /// A self-test or replay check that did not hold.
    Check(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Check(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use roadmix_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Param(_) | E::Config(_) => 2,
                E::Numeric(_) => 4,
                _ => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Usage(_) => 2,
                CliError::Data(_) => 3,
                CliError::Check(_) => 4,
            };
        }
    }
    3
}

pub fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::dispatch(&cli, &argv, None) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
