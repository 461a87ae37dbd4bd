use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use posestar::localization::RadiusMode;
use posestar::maskpost::iou;
use posestar::pipeline::{load_fixtures, run, sweep, PipelineConfig, RunInputs, SweepGrid};
use posestar::refinement::EdgeRule;
use posestar::synthgen::{generate_scene_sized, write_fixture, PhaseProfile, PosePreset};
use posestar::tensorio::{
    read_attention_stack, read_keypoints, read_mask_png, read_png, read_self_attention_stack, write_mask_png,
};
use posestar::Error;

#[derive(Parser, Debug)]
#[command(name = "posestar", version, about = "Anatomy-aware human masks from diffusion attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a mask for one image and instruction.
    Generate(GenerateArgs),
    /// Mean IoU over a fixture set for every cell of a parameter grid.
    Sweep(SweepArgs),
    /// Write a synthetic fixture directory.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    attn: PathBuf,
    #[arg(long = "self-attn")]
    self_attn: PathBuf,
    #[arg(long)]
    keypoints: PathBuf,
    #[arg(long)]
    instruction: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "r-mode")]
    r_mode: Option<RadiusMode>,
    #[arg(long)]
    window: Option<usize>,
    /// Keep edges near the region centre instead of near its boundary.
    #[arg(long = "mu-literal")]
    mu_literal: bool,
    /// Pipeline config as JSON; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "debug-dir")]
    debug_dir: Option<PathBuf>,
    /// Ground-truth mask; adds the IoU to the report.
    #[arg(long)]
    gt: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    fixtures: PathBuf,
    /// JSON object mapping config keys to lists of values.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Base pipeline config as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value = "standing")]
    pose: PosePreset,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    /// Instruction the self-attention and ground truth are made for.
    #[arg(long, default_value = "belly-length blouse")]
    instruction: String,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long = "zero-jitter")]
    zero_jitter: bool,
}

fn read_config(path: Option<&Path>) -> posestar::Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn generate(args: GenerateArgs) -> posestar::Result<()> {
    let mut cfg = read_config(args.config.as_deref())?;
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.mu {
        cfg.mu = v;
    }
    if let Some(v) = args.r_mode {
        cfg.r_mode = v;
    }
    if let Some(v) = args.window {
        cfg.window = v;
    }
    if args.mu_literal {
        cfg.edge_rule = EdgeRule::Literal;
    }
    cfg.debug_dir = args.debug_dir;
    cfg.validate()?;

    let image = read_png(&args.image)?;
    let attn = read_attention_stack(&args.attn)?;
    let self_attn = read_self_attention_stack(&args.self_attn)?;
    let keypoints = read_keypoints(&args.keypoints)?;
    let gt = args.gt.as_deref().map(read_mask_png).transpose()?;
    let inputs = RunInputs {
        image: &image,
        attn: &attn,
        self_attn: &self_attn,
        keypoints: &keypoints,
        instruction: &args.instruction,
    };
    let mut out = run::<f32>(&inputs, &cfg)?;
    if let Some(gt) = &gt {
        out.report.iou = Some(iou(&out.mask, gt)?);
    }
    write_mask_png(&out.mask, &args.out)?;
    out.report.mask_path = Some(args.out.display().to_string());
    println!("{}", serde_json::to_string_pretty(&out.report)?);
    Ok(())
}

fn run_sweep(args: SweepArgs) -> posestar::Result<()> {
    let base = read_config(args.config.as_deref())?;
    let text = fs::read_to_string(&args.grid).map_err(|e| Error::Io {
        path: args.grid.clone(),
        source: e,
    })?;
    let grid = SweepGrid::from_json(&text)?;
    let fixtures = load_fixtures(&args.fixtures)?;
    info!("{} fixtures, {} cells", fixtures.len(), grid.cells().len());
    let table = sweep(&base, &grid, &fixtures)?;
    let file = fs::File::create(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    table.write_csv(file)?;
    for row in &table.rows {
        if row.failures > 0 {
            warn!("{:?}: {} of {} runs failed", row.assignment, row.failures, row.fixtures);
        }
    }
    Ok(())
}

fn synth(args: SynthArgs) -> posestar::Result<()> {
    let scene = generate_scene_sized(args.pose, args.seed, args.size)?.with_target(&args.instruction)?;
    let mut profile = PhaseProfile::sampled(args.seed);
    if args.zero_jitter {
        profile = profile.zero_jitter();
    }
    write_fixture(&scene, &profile, &args.out_dir)
}

fn init_threads() {
    let Ok(v) = std::env::var("POSESTAR_THREADS") else {
        return;
    };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                warn!("POSESTAR_THREADS ignored: {e}");
            }
        }
        _ => warn!("POSESTAR_THREADS must be a positive integer, got {v:?}"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    init_threads();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
