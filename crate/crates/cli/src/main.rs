use anyhow::{anyhow, Context};
use bagrasp::classical::classical_detect;
use bagrasp::config::Settings;
use bagrasp::denoise::ProposalBuffer;
use bagrasp::image::{load_pgm, load_ppm, save_ppm, ImageError};
use bagrasp::kinematics::{fk, ArmModel, JointVector};
use bagrasp::learned::{self, learned_pipeline, LrSchedule, ModelParams};
use bagrasp::proposal::{read_proposals, ProposalError};
use bagrasp::sim::{self, draw_grasp_overlay, run_batch, write_episode, VisionSource};
use bagrasp::trajectory::plan;
use bagrasp::GraspProposal;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bagrasp", version, about = "Grasp planning and control for clear plastic bags")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set sigma=2.0
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Propose a grasp from one frame
    Vision {
        #[arg(long, value_enum, default_value_t = Mode::Classical)]
        mode: Mode,
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        depth: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Write the frame with the grasp drawn on it
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Timestamp stamped on the proposal
        #[arg(long, default_value_t = 0.0)]
        t: f64,
    },
    /// Reduce JSON-lines proposals on stdin to one grasp
    Denoise {
        /// Evaluation time; defaults to the latest timestamp
        #[arg(long)]
        now: Option<f64>,
    },
    /// Sample a cubic trajectory from the home pose to a grasp as CSV
    Plan {
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, default_value_t = 0.0)]
        t_i: f64,
        #[arg(long)]
        t_f: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Arm description file; defaults to the built-in arm
        #[arg(long)]
        arm: Option<PathBuf>,
    },
    /// Run seeded closed-loop episodes on synthetic scenes
    Simulate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "sim_out")]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long, value_enum, default_value_t = SimVision::Classical)]
        vision: SimVision,
        #[arg(long)]
        params: Option<PathBuf>,
        /// JSON-lines proposals for --vision file
        #[arg(long)]
        proposals: Option<PathBuf>,
        #[arg(long)]
        arm: Option<PathBuf>,
    },
    /// Train the learned model on a scene directory
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        schedule: Option<Schedule>,
    },
    /// Write a labeled synthetic dataset
    Genscenes {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Classical,
    Learned,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimVision {
    Classical,
    Learned,
    File,
}

#[derive(Clone, Copy, ValueEnum)]
enum Schedule {
    Constant,
    Cosine,
}

/// Usage errors exit with 2, runtime failures with 1.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

type CmdResult = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(anyhow!("no such file: {}", path.display())))
    }
}

/// Missing or unreadable inputs are usage errors; bad contents are runtime.
fn image_error(path: &Path, e: ImageError) -> Failure {
    match e {
        ImageError::Io(_) => usage(anyhow!("cannot read {}: {e}", path.display())),
        e => runtime(anyhow!("{}: {e}", path.display())),
    }
}

fn load_settings(common: &Common) -> Result<Settings, Failure> {
    let mut settings = Settings::default();
    if let Some(path) = &common.config {
        require_file(path)?;
        let text = std::fs::read_to_string(path).map_err(usage)?;
        settings.apply_text(&text).map_err(usage)?;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(anyhow!("--set expects KEY=VALUE, got {kv:?}")))?;
        settings.set(k.trim(), v).map_err(usage)?;
    }
    settings.validate().map_err(usage)?;
    Ok(settings)
}

fn load_arm(path: Option<&Path>) -> Result<ArmModel, Failure> {
    match path {
        None => Ok(ArmModel::sawyer_like()),
        Some(p) => {
            require_file(p)?;
            ArmModel::load(p).map_err(usage)
        }
    }
}

fn load_params(path: Option<&Path>) -> Result<ModelParams, Failure> {
    let path = path.ok_or_else(|| usage(anyhow!("--params is required for learned vision")))?;
    require_file(path)?;
    ModelParams::load(path).map_err(|e| runtime(anyhow!("{}: {e}", path.display())))
}

fn print_line(line: &str) -> CmdResult {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").map_err(runtime)
}

fn cmd_vision(
    settings: &Settings,
    mode: Mode,
    rgb_path: &Path,
    depth_path: Option<&Path>,
    params_path: Option<&Path>,
    overlay: Option<&Path>,
    t: f64,
) -> CmdResult {
    require_file(rgb_path)?;
    let rgb = load_ppm(rgb_path).map_err(|e| image_error(rgb_path, e))?;
    let classical = &settings.sim.classical;
    let (proposal, pixel) = match mode {
        Mode::Classical => {
            let out = classical_detect(&rgb, classical, t).map_err(runtime)?;
            (out.proposal, out.grasp.point)
        }
        Mode::Learned => {
            let depth_path =
                depth_path.ok_or_else(|| usage(anyhow!("--depth is required for learned vision")))?;
            require_file(depth_path)?;
            let params = load_params(params_path)?;
            let depth = load_pgm(depth_path).map_err(|e| image_error(depth_path, e))?;
            learned_pipeline(&params, &rgb, &depth, &classical.calibration, t).map_err(runtime)?
        }
    };
    if let Some(path) = overlay {
        save_ppm(&draw_grasp_overlay(&rgb, pixel, proposal.theta), path)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(runtime)?;
    }
    print_line(&proposal.to_json_line())
}

fn cmd_denoise(settings: &Settings, now: Option<f64>) -> CmdResult {
    let stdin = std::io::stdin();
    let mut proposals = read_proposals(BufReader::new(stdin.lock())).map_err(|e| match e {
        ProposalError::Io(_) => runtime(e),
        e => usage(e),
    })?;
    if proposals.is_empty() {
        return Err(runtime(anyhow!("no proposals on stdin")));
    }
    proposals.sort_by(|a, b| a.t.total_cmp(&b.t));
    let now = now.unwrap_or_else(|| proposals.last().map(|p| p.t).unwrap_or(0.0));
    let mut buffer = ProposalBuffer::new(settings.sim.denoise_window, settings.sim.denoise_threshold);
    for p in proposals {
        buffer.push(p).map_err(runtime)?;
    }
    let grasp = buffer.denoise(now).map_err(runtime)?;
    print_line(&grasp.to_json_line())
}

#[allow(clippy::too_many_arguments)]
fn cmd_plan(
    settings: &Settings,
    x: f64,
    y: f64,
    theta: f64,
    t_i: f64,
    t_f: Option<f64>,
    dt: f64,
    arm: Option<&Path>,
) -> CmdResult {
    let t_f = t_f.unwrap_or(t_i + settings.sim.t_f);
    if !(dt > 0.0) || ![x, y, theta, t_i, t_f].iter().all(|v| v.is_finite()) {
        return Err(usage(anyhow!("dt must be positive and all values finite")));
    }
    let arm = load_arm(arm)?;
    let start = fk(&arm, &JointVector::zeros());
    let target = GraspProposal::new(x, y, theta, t_i);
    let traj = plan(&start, &target, settings.sim.grasp_z, t_i, t_f).map_err(usage)?;
    let mut csv = String::from(
        "t,px,py,pz,vx,vy,vz,r11,r12,r13,r21,r22,r23,r31,r32,r33,wffx,wffy,wffz\n",
    );
    let n = ((t_f - t_i) / dt).round() as usize;
    for k in 0..=n {
        let t = if k == n { t_f } else { t_i + k as f64 * dt };
        let s = traj.sample(t);
        let _ = write!(csv, "{t}");
        let rot = s.r_d.to_row_array();
        for v in s.p_d.iter().chain(s.pdot_d.iter()).chain(rot.iter()).chain(s.w_ff.iter()) {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    std::io::stdout().lock().write_all(csv.as_bytes()).map_err(runtime)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    settings: &Settings,
    seed: u64,
    out: &Path,
    episodes: usize,
    vision: SimVision,
    params: Option<&Path>,
    proposals: Option<&Path>,
    arm: Option<&Path>,
) -> CmdResult {
    let arm = load_arm(arm)?;
    let source = match vision {
        SimVision::Classical => VisionSource::Classical,
        SimVision::Learned => VisionSource::Learned(Box::new(load_params(params)?)),
        SimVision::File => {
            let path =
                proposals.ok_or_else(|| usage(anyhow!("--proposals is required for --vision file")))?;
            require_file(path)?;
            let file = std::fs::File::open(path).map_err(usage)?;
            VisionSource::File(read_proposals(BufReader::new(file)).map_err(usage)?)
        }
    };
    let (scenes, summary) = run_batch(episodes, &source, &arm, &settings.sim, seed);
    let write = || -> anyhow::Result<()> {
        std::fs::create_dir_all(out)?;
        for (i, (scene, report)) in scenes.iter().zip(&summary.reports).enumerate() {
            write_episode(&out.join(format!("episode_{i:04}")), scene, report)?;
        }
        std::fs::write(out.join("summary.csv"), summary.summary_csv())?;
        std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        Ok(())
    };
    write().with_context(|| format!("writing {}", out.display())).map_err(runtime)?;
    let line = serde_json::json!({
        "episodes": summary.episodes,
        "success_rate": summary.success_rate,
        "good_grasp_rate": summary.good_grasp_rate,
    });
    print_line(&line.to_string())
}

fn cmd_train(
    settings: &Settings,
    data: &Path,
    out: &Path,
    epochs: Option<usize>,
    lr: Option<f64>,
    seed: u64,
    schedule: Option<Schedule>,
) -> CmdResult {
    if !data.join("labels.csv").is_file() {
        return Err(usage(anyhow!("{} has no labels.csv", data.display())));
    }
    let mut config = settings.train;
    config.seed = seed;
    if let Some(e) = epochs {
        config.epochs = e;
    }
    if let Some(lr) = lr {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(usage(anyhow!("--lr must be positive")));
        }
        config.lr = lr;
    }
    if let Some(s) = schedule {
        config.schedule = match s {
            Schedule::Constant => LrSchedule::Constant,
            Schedule::Cosine => LrSchedule::Cosine,
        };
    }
    let scenes = learned::load_dataset(data).map_err(runtime)?;
    let examples = scenes
        .iter()
        .map(|s| s.to_example())
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime)?;
    let (params, log) = learned::train(&examples, &config).map_err(runtime)?;
    let write = || -> anyhow::Result<()> {
        std::fs::create_dir_all(out)?;
        params.save(out.join("params.bin"))?;
        let mut csv = String::from("epoch,running_loss,loss\n");
        for e in &log {
            writeln!(csv, "{},{},{}", e.epoch, e.running_loss, e.loss)?;
        }
        std::fs::write(out.join("loss.csv"), csv)?;
        Ok(())
    };
    write().with_context(|| format!("writing {}", out.display())).map_err(runtime)?;
    let last = log.last().map(|e| e.loss).unwrap_or(f64::NAN);
    let line = serde_json::json!({
        "scenes": examples.len(),
        "epochs": config.epochs,
        "initial_loss": log[0].loss,
        "final_loss": last,
    });
    print_line(&line.to_string())
}

fn cmd_genscenes(settings: &Settings, n: usize, seed: u64, out: &Path) -> CmdResult {
    let labeled = sim::write_dataset(out, n, &settings.sim.scene, seed).map_err(runtime)?;
    print_line(&serde_json::json!({ "scenes": n, "labeled": labeled }).to_string())
}

fn run(cli: Cli) -> CmdResult {
    let settings = load_settings(&cli.common)?;
    match cli.command {
        Command::Vision {
            mode,
            rgb,
            depth,
            params,
            overlay,
            t,
        } => cmd_vision(
            &settings,
            mode,
            &rgb,
            depth.as_deref(),
            params.as_deref(),
            overlay.as_deref(),
            t,
        ),
        Command::Denoise { now } => cmd_denoise(&settings, now),
        Command::Plan {
            x,
            y,
            theta,
            t_i,
            t_f,
            dt,
            arm,
        } => cmd_plan(&settings, x, y, theta, t_i, t_f, dt, arm.as_deref()),
        Command::Simulate {
            seed,
            out,
            episodes,
            vision,
            params,
            proposals,
            arm,
        } => cmd_simulate(
            &settings,
            seed,
            &out,
            episodes,
            vision,
            params.as_deref(),
            proposals.as_deref(),
            arm.as_deref(),
        ),
        Command::Train {
            data,
            out,
            epochs,
            lr,
            seed,
            schedule,
        } => cmd_train(&settings, &data, &out, epochs, lr, seed, schedule),
        Command::Genscenes { n, seed, out } => cmd_genscenes(&settings, n, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
