//! `surfcode` command-line front end.
//!
//! Every command reads an optional TOML scenario (`--config`), applies its
//! own flag overrides, and prints a JSON summary that embeds the resolved
//! scenario. Exit codes: 0 success, 2 bad configuration, 3 pipeline failure.

mod commands;
mod fail;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use surfcode::harness::{Builtin, FilterMode};

#[derive(Debug, Parser)]
#[command(name = "surfcode", version, about = "Hierarchical surface codes: encode, render, match, solve, evaluate")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Scenario file (TOML). Defaults are used for anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the scenario.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Output directory. Falls back to the scenario's `output`, then `out`.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the code hierarchy and write the lookup table (codebook.zbcb).
    Encode(EncodeArgs),
    /// Render a ground-truth code map (codemap.zbcm) for one pose.
    Render(RenderArgs),
    /// Turn a code map into 2D-3D correspondences (correspondences.csv).
    Match(MatchArgs),
    /// Estimate a pose from a correspondence file (pose.json).
    SolvePose(SolveArgs),
    /// Score predicted poses against ground truth (eval.json).
    Eval(EvalArgs),
    /// Synthetic corruption benchmark (report.json, poses.csv, timings.json).
    BenchBitflip(BenchArgs),
    /// Evaluate the training loss on a prediction file (loss.json).
    LossCheck(LossArgs),
}

/// Object geometry and code layout overrides.
#[derive(Debug, Args, Default)]
pub struct ObjectArgs {
    /// Mesh file (OBJ or PLY), in millimeters after `--scale`.
    #[arg(long, conflicts_with = "builtin")]
    pub mesh: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub builtin: Option<BuiltinArg>,
    #[arg(long)]
    pub scale: Option<f64>,
    /// Use the mesh as given instead of subdividing up to `r^d` vertices.
    #[arg(long)]
    pub no_upsample: bool,
    #[arg(long)]
    pub radix: Option<u32>,
    #[arg(long)]
    pub digits: Option<u32>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BuiltinArg {
    Tetrahedron,
    Cube,
    Icosahedron,
}

impl From<BuiltinArg> for Builtin {
    fn from(b: BuiltinArg) -> Self {
        match b {
            BuiltinArg::Tetrahedron => Builtin::Tetrahedron,
            BuiltinArg::Cube => Builtin::Cube,
            BuiltinArg::Icosahedron => Builtin::Icosahedron,
        }
    }
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub object: ObjectArgs,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub object: ObjectArgs,
    /// Pose file (`R`, `t`); otherwise pose `--pose-index` of the sampler.
    #[arg(long)]
    pub pose: Option<PathBuf>,
    #[arg(long, default_value_t = 0, conflicts_with = "pose")]
    pub pose_index: usize,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub codemap: PathBuf,
    #[arg(long)]
    pub codebook: PathBuf,
    /// Apply the coherence filter with the scenario's radius and threshold.
    #[arg(long)]
    pub filter: bool,
    /// Region of interest as `x,y,crop_w,crop_h`; the map is the resized crop.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub roi: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub correspondences: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub object: ObjectArgs,
    /// Predicted poses: one pose object or an array of them.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth poses, in the same order.
    #[arg(long)]
    pub gt: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub object: ObjectArgs,
    #[arg(long)]
    pub poses: Option<usize>,
    /// 1-based code bits to corrupt, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',')]
    pub flip_bits: Vec<u32>,
    /// Flip probability for each bit in `--flip-bits`.
    #[arg(long, default_value_t = 0.05, requires = "flip_bits")]
    pub flip_p: f64,
    #[arg(long, value_enum)]
    pub filter: Option<FilterArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FilterArg {
    Off,
    On,
    Both,
}

impl From<FilterArg> for FilterMode {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Off => FilterMode::Off,
            FilterArg::On => FilterMode::On,
            FilterArg::Both => FilterMode::Both,
        }
    }
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// JSON prediction file; see the README for its fields.
    #[arg(long)]
    pub input: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
