//! `ugda` — a command-line workbench for uncertainty-guided stereo-pair
//! augmentation and a training-free classical matcher to probe it with.
//!
//! Subcommands:
//!
//! * `augment` — perturb the channel statistics of every pair in a manifest
//!   and write the augmented PNGs plus a replayable draw log.
//! * `match` — run the census + semi-global matcher over a manifest and
//!   write per-pair disparity PFMs (plus metrics when ground truth exists).
//! * `eval` — score externally produced disparity maps against manifest
//!   ground truth (EPE, bad-pixel rate, optional error maps).
//! * `consistency` — report the feature-consistency loss between original
//!   and augmented pairs, together with the disparity loss and the weighted
//!   total.
//! * `gradcheck` — verify the analytic loss gradients against central
//!   finite differences.
//! * `hist` — export per-channel image histograms and channel-averaged
//!   feature histograms for original vs. augmented images.
//! * `selftest` — run the built-in invariant checks and exit nonzero if any
//!   fails.
//!
//! Every subcommand is a pure function of its input files and flags:
//! rerunning with the same arguments produces byte-identical outputs, and
//! the `--jobs` thread count never changes results. Commands that write
//! into an output directory also drop a `run.cfg` file there whose tokens
//! replay the run exactly: `ugda $(cat out/run.cfg)`.
//!
//! Exit codes: 0 success; 1 a check the command performed failed
//! (`gradcheck`, `selftest`); 2 unusable input (bad flags, missing or
//! malformed files).

mod cmds;
mod selftest;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use ugda_core::augment::{ClipPolicy, PairMode};
use ugda_core::loss::ConsNorm;
use ugda_core::stereo::Directions;

/// Failure modes, mapped to distinct process exit codes.
pub(crate) enum Failure {
    /// Unusable input: unreadable files, malformed manifests, invalid flag
    /// values. Exit code 2.
    Input(String),
    /// A verification the command ran reported a failure. Exit code 1.
    Check(String),
}

impl From<ugda_core::Error> for Failure {
    fn from(e: ugda_core::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

pub(crate) type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(
    name = "ugda",
    version,
    about = "Uncertainty-guided augmentation workbench for stereo pairs",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Augment every pair in a manifest; write PNGs and a draw log.
    Augment(AugmentArgs),
    /// Run the classical matcher; write disparity PFMs and metrics.
    Match(MatchArgs),
    /// Score predicted disparity maps against manifest ground truth.
    Eval(EvalArgs),
    /// Report feature-consistency and disparity losses per pair.
    Consistency(ConsistencyArgs),
    /// Check analytic loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Export image and feature histograms, original vs. augmented.
    Hist(HistArgs),
    /// Run the built-in invariant checks.
    Selftest(SelftestArgs),
}

/// Values for `--pair-mode`.
#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub(crate) enum PairModeArg {
    /// Left and right reuse one epsilon set per pair.
    Shared,
    /// Each side draws its own epsilons.
    Independent,
}

impl PairModeArg {
    fn to_core(self) -> PairMode {
        match self {
            PairModeArg::Shared => PairMode::Shared,
            PairModeArg::Independent => PairMode::Independent,
        }
    }
    fn token(self) -> &'static str {
        match self {
            PairModeArg::Shared => "shared",
            PairModeArg::Independent => "independent",
        }
    }
}

/// Values for `--clip`.
#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub(crate) enum ClipArg {
    /// Keep augmented values unclipped (clamping happens only at 8-bit
    /// export).
    None,
    /// Clamp augmented values into [0, 1] right after augmentation.
    Clip01,
}

impl ClipArg {
    fn to_core(self) -> ClipPolicy {
        match self {
            ClipArg::None => ClipPolicy::None,
            ClipArg::Clip01 => ClipPolicy::Clip01,
        }
    }
    fn token(self) -> &'static str {
        match self {
            ClipArg::None => "none",
            ClipArg::Clip01 => "clip01",
        }
    }
}

/// Values for `--directions`.
#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub(crate) enum DirectionsArg {
    /// Horizontal and vertical scanlines only.
    Four,
    /// Horizontal, vertical, and both diagonals.
    Eight,
}

impl DirectionsArg {
    fn to_core(self) -> Directions {
        match self {
            DirectionsArg::Four => Directions::Four,
            DirectionsArg::Eight => Directions::Eight,
        }
    }
    fn token(self) -> &'static str {
        match self {
            DirectionsArg::Four => "four",
            DirectionsArg::Eight => "eight",
        }
    }
}

/// Values for `--cons-norm`.
#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub(crate) enum ConsNormArg {
    /// Plain Euclidean norm of the feature difference.
    Frobenius,
    /// Euclidean norm divided by sqrt(element count).
    Mean,
}

impl ConsNormArg {
    fn to_core(self) -> ConsNorm {
        match self {
            ConsNormArg::Frobenius => ConsNorm::Frobenius,
            ConsNormArg::Mean => ConsNorm::MeanPerElement,
        }
    }
    fn token(self) -> &'static str {
        match self {
            ConsNormArg::Frobenius => "frobenius",
            ConsNormArg::Mean => "mean",
        }
    }
}

/// Manifest input and output directory, shared by all file-driven commands.
#[derive(Args)]
pub(crate) struct IoArgs {
    /// Manifest file: one `left<TAB>right<TAB>gt<TAB>tag` line per pair
    /// (`-` for no ground truth). Relative paths resolve against the
    /// manifest's directory.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

/// Worker-thread control. Results never depend on the thread count.
#[derive(Args)]
pub(crate) struct JobsArgs {
    /// Worker threads (0 = one per CPU).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

/// Random-seed control.
#[derive(Args)]
pub(crate) struct SeedArgs {
    /// Seed for all random draws. Falls back to the UGDA_SEED environment
    /// variable, then to 0.
    #[arg(long, env = "UGDA_SEED", default_value_t = 0)]
    pub seed: u64,
}

/// Augmentation hyperparameters.
#[derive(Args)]
pub(crate) struct AugArgs {
    /// Pairs per batch; the statistic spread that scales the perturbation
    /// is measured within each batch.
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    /// Whether the two sides of a pair share one epsilon set.
    #[arg(long, value_enum, default_value_t = PairModeArg::Shared)]
    pub pair_mode: PairModeArg,
    /// Lower bound on perturbed standard deviations; channels whose own
    /// deviation is below it are shifted instead of renormalized.
    #[arg(long, default_value_t = 1e-6)]
    pub sigma_floor: f64,
    /// Value-range policy applied right after augmentation.
    #[arg(long, value_enum, default_value_t = ClipArg::None)]
    pub clip: ClipArg,
    /// Probability that a pair is augmented at all (one gate per pair).
    #[arg(long, default_value_t = 1.0)]
    pub apply_prob: f64,
}

impl AugArgs {
    fn to_core(&self, seed: u64) -> ugda_core::augment::AugmentConfig {
        ugda_core::augment::AugmentConfig {
            pair_mode: self.pair_mode.to_core(),
            sigma_floor: self.sigma_floor,
            clip_policy: self.clip.to_core(),
            apply_probability: self.apply_prob,
            seed,
        }
    }
    fn tokens(&self, out: &mut Vec<String>) {
        out.push("--batch".into());
        out.push(self.batch.to_string());
        out.push("--pair-mode".into());
        out.push(self.pair_mode.token().into());
        out.push("--sigma-floor".into());
        out.push(self.sigma_floor.to_string());
        out.push("--clip".into());
        out.push(self.clip.token().into());
        out.push("--apply-prob".into());
        out.push(self.apply_prob.to_string());
    }
}

/// Matcher hyperparameters.
#[derive(Args)]
pub(crate) struct SgmArgs {
    /// Largest disparity searched (must be smaller than the image width).
    #[arg(long, default_value_t = 64)]
    pub dmax: usize,
    /// Path penalty for a one-level disparity change.
    #[arg(long, default_value_t = 10.0)]
    pub p1: f64,
    /// Path penalty for larger disparity jumps (>= p1).
    #[arg(long, default_value_t = 120.0)]
    pub p2: f64,
    /// Census window side length (odd, 3..=11).
    #[arg(long, default_value_t = 5)]
    pub census_window: usize,
    /// Number of aggregation scanline directions.
    #[arg(long, value_enum, default_value_t = DirectionsArg::Eight)]
    pub directions: DirectionsArg,
    /// Left-right agreement tolerance in pixels; pixels disagreeing more
    /// are invalidated.
    #[arg(long, default_value_t = 1.0)]
    pub lr_tol: f64,
}

impl SgmArgs {
    fn to_core(&self) -> ugda_core::stereo::SgmParams {
        ugda_core::stereo::SgmParams {
            p1: self.p1,
            p2: self.p2,
            directions: self.directions.to_core(),
            census_window: self.census_window,
        }
    }
    fn tokens(&self, out: &mut Vec<String>) {
        out.push("--dmax".into());
        out.push(self.dmax.to_string());
        out.push("--p1".into());
        out.push(self.p1.to_string());
        out.push("--p2".into());
        out.push(self.p2.to_string());
        out.push("--census-window".into());
        out.push(self.census_window.to_string());
        out.push("--directions".into());
        out.push(self.directions.token().into());
        out.push("--lr-tol".into());
        out.push(self.lr_tol.to_string());
    }
}

/// Loss hyperparameters.
#[derive(Args)]
pub(crate) struct LossArgs {
    /// Weight of the feature-consistency term in the total loss.
    #[arg(long, default_value_t = 0.17)]
    pub lambda: f64,
    /// Normalization of the feature-difference norm.
    #[arg(long, value_enum, default_value_t = ConsNormArg::Mean)]
    pub cons_norm: ConsNormArg,
    /// Smooth-L1 transition point for the disparity loss.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
}

impl LossArgs {
    fn to_core(&self) -> ugda_core::loss::LossConfig {
        ugda_core::loss::LossConfig {
            lambda: self.lambda,
            cons_norm: self.cons_norm.to_core(),
            smooth_l1_beta: self.beta,
        }
    }
    fn tokens(&self, out: &mut Vec<String>) {
        out.push("--lambda".into());
        out.push(self.lambda.to_string());
        out.push("--cons-norm".into());
        out.push(self.cons_norm.token().into());
        out.push("--beta".into());
        out.push(self.beta.to_string());
    }
}

#[derive(Args)]
pub(crate) struct AugmentArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub aug: AugArgs,
    #[command(flatten)]
    pub jobs: JobsArgs,
}

#[derive(Args)]
pub(crate) struct MatchArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub sgm: SgmArgs,
    /// Bad-pixel threshold in pixels for the metric report.
    #[arg(long, default_value_t = 3.0)]
    pub threshold: f64,
    #[command(flatten)]
    pub jobs: JobsArgs,
}

#[derive(Args)]
pub(crate) struct EvalArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Directory holding predicted disparities named like the `match`
    /// output: `disp_NNNN.pfm` (or `.png` in 16-bit benchmark encoding).
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Bad-pixel threshold in pixels.
    #[arg(long, default_value_t = 3.0)]
    pub threshold: f64,
    /// Also write per-pair error-map PNGs with EPE sidecar text files.
    #[arg(long, default_value_t = false)]
    pub error_maps: bool,
    /// Error magnitude mapped to the hottest color in error maps.
    #[arg(long, default_value_t = ugda_core::metrics::DEFAULT_ERROR_CLIP)]
    pub map_clip: f64,
    #[command(flatten)]
    pub jobs: JobsArgs,
}

#[derive(Args)]
pub(crate) struct ConsistencyArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub aug: AugArgs,
    #[command(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    pub sgm: SgmArgs,
    #[command(flatten)]
    pub jobs: JobsArgs,
}

#[derive(Args)]
pub(crate) struct GradcheckArgs {
    #[command(flatten)]
    pub seed: SeedArgs,
    /// Height of the random test images.
    #[arg(long, default_value_t = 8)]
    pub height: usize,
    /// Width of the random test images.
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    /// Coordinates sampled from each gradient block.
    #[arg(long, default_value_t = 6)]
    pub samples: usize,
    /// Largest tolerated relative error between analytic and
    /// finite-difference gradients.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[command(flatten)]
    pub loss: LossArgs,
    /// Optional directory for the report and run.cfg.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Offset added to every analytic gradient before comparison; exercises
    /// the detector itself.
    #[arg(long, default_value_t = 0.0, hide = true)]
    pub corrupt: f64,
}

#[derive(Args)]
pub(crate) struct HistArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub aug: AugArgs,
    #[command(flatten)]
    pub jobs: JobsArgs,
}

#[derive(Args)]
pub(crate) struct SelftestArgs {
    /// Optional directory for the check listing and run.cfg.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> CmdResult {
    match cmd {
        Cmd::Augment(a) => {
            cmds::configure_jobs(a.jobs.jobs)?;
            cmds::augment(&a)
        }
        Cmd::Match(a) => {
            cmds::configure_jobs(a.jobs.jobs)?;
            cmds::run_match(&a)
        }
        Cmd::Eval(a) => {
            cmds::configure_jobs(a.jobs.jobs)?;
            cmds::eval(&a)
        }
        Cmd::Consistency(a) => {
            cmds::configure_jobs(a.jobs.jobs)?;
            cmds::consistency(&a)
        }
        Cmd::Gradcheck(a) => cmds::gradcheck(&a),
        Cmd::Hist(a) => {
            cmds::configure_jobs(a.jobs.jobs)?;
            cmds::hist(&a)
        }
        Cmd::Selftest(a) => selftest::run(&a),
    }
}
