mod commands;
mod staging;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use egomem_core::memory::{
    DEFAULT_FEATURE_STRIDE, DEFAULT_VOXEL_SIZE_FEAT, DEFAULT_VOXEL_SIZE_RGB,
};
use egomem_core::metrics::MIN_MASK_AREA;
use egomem_synth::MotionProfile;

/// Spatial memory and conditioning pipeline for egocentric video generation.
#[derive(Debug, Parser)]
#[command(name = "egomem", version, propagate_version = true)]
struct Cli {
    /// Worker threads; 0 uses every core. Outputs do not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pool posed semi-dense points into a voxel memory.
    BuildMemory(BuildMemoryArgs),
    /// Render a memory into a target trajectory with pose overlays.
    Render(RenderArgs),
    /// Encode an ego pose sequence into pose tokens.
    EncodePose(EncodePoseArgs),
    /// Delete memory regions or remove exo persons.
    Edit(EditArgs),
    /// Score trajectories, detections, keypoints and hand masks.
    Evaluate(EvaluateArgs),
    /// Write a synthetic fixture with exact ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct BuildMemoryArgs {
    /// Point table `uid,px,py,pz` (optionally gzip).
    #[arg(long)]
    pub points: PathBuf,
    /// Observation table `frame,uid,u,v` (optionally gzip).
    #[arg(long)]
    pub obs: PathBuf,
    /// Context camera trajectory CSV.
    #[arg(long)]
    pub traj: PathBuf,
    /// Pinhole intrinsics JSON.
    #[arg(long)]
    pub intr: PathBuf,
    /// Directory of context frames `frame_%05d.ppm`.
    #[arg(long)]
    pub frames: PathBuf,
    /// Context feature video (`featmap.bin`); omit for an RGB-only memory.
    #[arg(long)]
    pub feats: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_VOXEL_SIZE_RGB)]
    pub voxel_rgb: f32,
    #[arg(long, default_value_t = DEFAULT_VOXEL_SIZE_FEAT)]
    pub voxel_feat: f32,
    /// Spatial stride of the feature video relative to the frames.
    #[arg(long, default_value_t = DEFAULT_FEATURE_STRIDE)]
    pub stride: usize,
    /// Output memory file (`.e3m`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone, Default)]
pub struct EncoderArgs {
    /// Trained weight file (`.e3w`).
    #[arg(long, conflicts_with = "encoder_config")]
    pub encoder: Option<PathBuf>,
    /// Encoder config JSON; weights are initialized from the seed.
    #[arg(long)]
    pub encoder_config: Option<PathBuf>,
    /// Seed for initialized weights and dropout; overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub memory: PathBuf,
    /// Target camera trajectory CSV.
    #[arg(long)]
    pub traj: PathBuf,
    #[arg(long)]
    pub intr: PathBuf,
    /// Exo skeletons to draw.
    #[arg(long)]
    pub exo: Option<PathBuf>,
    /// Ego pose sequence to draw and encode.
    #[arg(long)]
    pub ego: Option<PathBuf>,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    /// Last context frame copied into the bundle.
    #[arg(long)]
    pub context_frame: Option<PathBuf>,
    /// Exo person id to leave out (repeatable).
    #[arg(long = "exclude-person", value_name = "ID", allow_hyphen_values = true)]
    pub exclude: Vec<i64>,
    /// Splat radius in pixels.
    #[arg(long, default_value_t = 0)]
    pub splat_radius: u32,
    /// Background color `r,g,b` in [0,1].
    #[arg(long, value_parser = parse_rgb, default_value = "0,0,0")]
    pub background: [f32; 3],
    /// Feature render stride.
    #[arg(long, default_value_t = DEFAULT_FEATURE_STRIDE)]
    pub stride: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncodePoseArgs {
    #[arg(long)]
    pub ego: PathBuf,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    /// Also write the weights used, for reuse with `--encoder`.
    #[arg(long)]
    pub save_weights: Option<PathBuf>,
    /// Output token file (`tokens.bin`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    /// Memory to edit; requires `--out`.
    #[arg(long, requires = "out")]
    pub memory: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Axis-aligned box `x0,y0,z0,x1,y1,z1` (repeatable).
    #[arg(long, value_parser = parse_floats::<6>, requires = "memory", allow_hyphen_values = true)]
    pub remove_box: Vec<[f64; 6]>,
    /// Sphere `cx,cy,cz,r` (repeatable).
    #[arg(long, value_parser = parse_floats::<4>, requires = "memory", allow_hyphen_values = true)]
    pub remove_sphere: Vec<[f64; 4]>,
    /// Exo skeletons to edit; requires `--exo-out`.
    #[arg(long, requires = "exo_out")]
    pub exo: Option<PathBuf>,
    #[arg(long)]
    pub exo_out: Option<PathBuf>,
    /// Exo person id to remove (repeatable).
    #[arg(long, value_name = "ID", requires = "exo", allow_hyphen_values = true)]
    pub remove_exo_person: Vec<i64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, requires = "est_traj")]
    pub gt_traj: Option<PathBuf>,
    #[arg(long, requires = "gt_traj")]
    pub est_traj: Option<PathBuf>,
    #[arg(long, requires = "pred_objects")]
    pub gt_objects: Option<PathBuf>,
    #[arg(long, requires = "gt_objects")]
    pub pred_objects: Option<PathBuf>,
    #[arg(long, requires = "pred_exo")]
    pub gt_exo: Option<PathBuf>,
    #[arg(long, requires = "gt_exo")]
    pub pred_exo: Option<PathBuf>,
    #[arg(long, requires = "pred_hands")]
    pub gt_hands: Option<PathBuf>,
    #[arg(long, requires = "gt_hands")]
    pub pred_hands: Option<PathBuf>,
    /// Drop mask components smaller than this many pixels before scoring.
    #[arg(long, num_args = 0..=1, default_missing_value = MIN_MASK_AREA_STR)]
    pub min_mask_area: Option<usize>,
    /// Directory receiving `report.json` and `report.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

const MIN_MASK_AREA_STR: &str = "1536";
const _: () = assert!(MIN_MASK_AREA == 1536);

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20_000)]
    pub points: usize,
    #[arg(long, default_value_t = 200)]
    pub context_frames: usize,
    #[arg(long, default_value_t = 80)]
    pub targets: usize,
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    #[arg(long, default_value_t = 512)]
    pub height: usize,
    /// Horizontal field of view, degrees.
    #[arg(long, default_value_t = 90.0)]
    pub fov: f64,
    /// Room half-width, meters.
    #[arg(long, default_value_t = 2.0)]
    pub extent: f64,
    #[arg(long, default_value_t = 3)]
    pub objects: usize,
    /// Descriptor channels; 0 skips the feature video.
    #[arg(long, default_value_t = 16)]
    pub feat_dim: usize,
    #[arg(long, default_value_t = DEFAULT_FEATURE_STRIDE)]
    pub stride: usize,
    #[arg(long, default_value_t = DEFAULT_VOXEL_SIZE_RGB)]
    pub voxel_rgb: f32,
    #[arg(long, default_value_t = DEFAULT_VOXEL_SIZE_FEAT)]
    pub voxel_feat: f32,
    /// Target motion: orbit, walk or head-bob.
    #[arg(long, default_value = "head-bob")]
    pub profile: MotionProfile,
    #[arg(long, default_value_t = 1)]
    pub exo_people: usize,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; N] = vals
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))?;
    if arr.iter().any(|v| !v.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok(arr)
}

fn parse_rgb(s: &str) -> Result<[f32; 3], String> {
    let c = parse_floats::<3>(s)?;
    if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err("color channels must lie in [0,1]".into());
    }
    Ok(c.map(|v| v as f32))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EGOMEM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::BuildMemory(a) => commands::build_memory(&a),
        Command::Render(a) => commands::render(&a),
        Command::EncodePose(a) => commands::encode_pose(&a),
        Command::Edit(a) => commands::edit(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
