//! The `gaitforge` command line. Every command writes its CSV and JSON
//! artifacts plus a `manifest.json` into one output directory.
//!
//! Exit codes: 0 ok, 1 runtime failure, 2 configuration or input error,
//! 3 training abort, 4 robot fell, 5 rank-deficient sim-to-real trace.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::ars::{train_with, write_learning_curve, ArsError};
use crate::config::{sha256_hex, ConfigError, RunConfig};
use crate::env::{EnvError, TraceRecorder};
use crate::gaits::{
    gait_config, run_policy, run_transition, EpisodeResult, MultiGaitObjective, TransitionPlan,
    TRANSITION_COLUMNS,
};
use crate::kinematics::{JointState, Leg, STATE_DIM};
use crate::policy::{
    act, act_corrected, fit_sim2real, load_sim2real_map, PolicyBundle, PolicyError, PolicyMatrix,
    Sim2RealMap, StateTracePair, BUNDLE_VERSION,
};
use crate::trajectory::{
    build_trajectory, write_trajectory_csv, GaitConfig, GaitName, DEFAULT_CONTROL_POINTS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRAINING_ABORT: i32 = 3;
pub const EXIT_FALL: i32 = 4;
pub const EXIT_RANK_DEFICIENT: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "gaitforge",
    version,
    about = "Train and run half-step linear gait policies for a quadruped"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy with ARS and write the bundle and learning curve.
    Train(TrainArgs),
    /// Run a policy bundle and write the state trace and per-step actions.
    Rollout(RolloutArgs),
    /// Fit the affine sim-to-real state correction from a paired trace.
    #[command(name = "fit-sim2real")]
    FitSim2real(FitArgs),
    /// Write the per-leg foot splines a policy emits for one state.
    ExportTrajectory(ExportArgs),
    /// Run a policy while blending from one gait into another.
    Transition(TransitionArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Train a single shipped gait instead of the configured one.
    #[arg(long)]
    pub gait: Option<GaitName>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Gait steps per training episode.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RolloutArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Policy bundle written by `train`.
    #[arg(long)]
    pub policy: PathBuf,
    /// Gait to run; defaults to the configured or trained gait.
    #[arg(long)]
    pub gait: Option<GaitName>,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Sim-to-real map applied to the motor angles before the policy.
    #[arg(long)]
    pub sim2real: Option<PathBuf>,
    /// Substeps between trace rows; gait-step boundaries are always kept.
    #[arg(long, default_value_t = 10)]
    pub record_every: usize,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// CSV with columns t_s, sim_q0..sim_q11, real_q0..real_q11, weight.
    pub trace: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub gait: Option<GaitName>,
    /// Twelve comma-separated motor angles; defaults to the reset stance.
    #[arg(long, allow_hyphen_values = true)]
    pub state: Option<String>,
    /// Samples per leg over one full cycle.
    #[arg(long, default_value_t = 360)]
    pub resolution: usize,
    #[arg(long)]
    pub sim2real: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TransitionArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub from: GaitName,
    #[arg(long)]
    pub to: GaitName,
    /// Blend coefficient in (0, 1]; 1 switches in one gait step.
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    #[arg(long, default_value_t = 40)]
    pub steps: usize,
    /// Gait step at which the target switches.
    #[arg(long, default_value_t = 5)]
    pub switch_at: usize,
    #[arg(long)]
    pub sim2real: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub record_every: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    TrainingAborted(ArsError),
    #[error("robot fell after {steps} of {requested} gait steps")]
    Fell { steps: usize, requested: usize },
    #[error(transparent)]
    RankDeficient(PolicyError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => EXIT_CONFIG,
            CliError::TrainingAborted(_) => EXIT_TRAINING_ABORT,
            CliError::Fell { .. } => EXIT_FALL,
            CliError::RankDeficient(_) => EXIT_RANK_DEFICIENT,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn runtime(context: &str) -> impl Fn(&dyn std::fmt::Display) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

fn env_error(e: EnvError) -> CliError {
    match e {
        EnvError::InvalidConfig(m) | EnvError::InvalidAction(m) => CliError::Input(m),
        other => CliError::Runtime(other.to_string()),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli, &argv[1..]) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command; `args` are recorded in the manifest.
pub fn run(cli: &Cli, args: &[String]) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, args),
        Command::Rollout(a) => cmd_rollout(a, args),
        Command::FitSim2real(a) => cmd_fit_sim2real(a, args),
        Command::ExportTrajectory(a) => cmd_export_trajectory(a, args),
        Command::Transition(a) => cmd_transition(a, args),
    }
}

#[derive(Serialize)]
struct Versions {
    gaitforge: &'static str,
    bundle_format: u32,
}

/// Everything needed to reproduce a command's outputs.
#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    args: &'a [String],
    seed: u64,
    config_sha256: String,
    /// Input files by role, as SHA-256 digests.
    inputs: BTreeMap<&'a str, String>,
    outputs: Vec<&'a str>,
    versions: Versions,
}

impl<'a> Manifest<'a> {
    fn new(command: &'a str, args: &'a [String], config: &RunConfig) -> Self {
        Self {
            command,
            args,
            seed: config.seed,
            config_sha256: config.digest(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            versions: Versions {
                gaitforge: env!("CARGO_PKG_VERSION"),
                bundle_format: BUNDLE_VERSION,
            },
        }
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| runtime("manifest")(&e))?;
        write_text(&dir.join("manifest.json"), &(text + "\n"))
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(&dir.display().to_string())(&e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(&path.display().to_string())(&e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| runtime(&path.display().to_string())(&e))
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_bundle(path: &Path) -> Result<(PolicyBundle, String), CliError> {
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let bundle = PolicyBundle::from_json(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((bundle, sha256_hex(&bytes)))
}

/// Config, bundle and correction shared by the commands that run a policy.
struct PolicyRun {
    config: RunConfig,
    bundle: PolicyBundle,
    correction: Option<Sim2RealMap>,
    inputs: Vec<(&'static str, String)>,
}

fn load_policy_run(
    common: &CommonArgs,
    policy: &Path,
    sim2real: Option<&Path>,
) -> Result<PolicyRun, CliError> {
    let mut config = load_config(common)?;
    let (bundle, policy_hash) = load_bundle(policy)?;
    // The policy was trained against its own radius bounds.
    config.env.workspace.radii = bundle.bounds;
    config.validate()?;
    let mut inputs = vec![("policy", policy_hash)];
    let correction = match sim2real {
        Some(path) => {
            inputs.push(("sim2real", sha256_hex(&read_input(path)?)));
            Some(
                load_sim2real_map(path)
                    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
            )
        }
        None => bundle.correction.clone(),
    };
    Ok(PolicyRun {
        config,
        bundle,
        correction,
        inputs,
    })
}

/// A shipped gait, with the configuration's overrides when it names the same
/// gait.
fn named_gait(name: GaitName, config: &RunConfig) -> Result<GaitConfig, CliError> {
    match &config.gait {
        Some(section) if section.name == name => Ok(section.resolve("gait")?),
        _ => Ok(gait_config(name)),
    }
}

fn rollout_gait(
    flag: Option<GaitName>,
    config: &RunConfig,
    bundle: &PolicyBundle,
) -> Result<GaitConfig, CliError> {
    if let Some(name) = flag {
        return named_gait(name, config);
    }
    if let Some(section) = &config.gait {
        return Ok(section.resolve("gait")?);
    }
    let name: GaitName = bundle.gait.parse().map_err(|_| {
        CliError::Input(format!(
            "policy was trained on '{}'; choose a gait with --gait",
            bundle.gait
        ))
    })?;
    Ok(gait_config(name))
}

fn write_actions(path: &Path, result: &EpisodeResult) -> Result<(), CliError> {
    let fail = runtime("actions.csv");
    let mut w = csv::Writer::from_writer(create(path)?);
    let width = result
        .actions
        .first()
        .map_or(DEFAULT_CONTROL_POINTS, |a| a.len());
    let mut header: Vec<String> = ["step", "reward", "x_m", "yaw_rad"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..width).map(|i| format!("w{i}")));
    w.write_record(&header).map_err(|e| fail(&e))?;
    for (k, action) in result.actions.iter().enumerate() {
        let mut row = vec![
            k.to_string(),
            result.rewards[k].to_string(),
            result.x_positions[k].to_string(),
            result.yaws[k].to_string(),
        ];
        row.extend(action.radii().iter().map(|r| r.to_string()));
        w.write_record(&row).map_err(|e| fail(&e))?;
    }
    w.flush().map_err(|e| fail(&e))
}

fn cmd_train(a: &TrainArgs, args: &[String]) -> Result<(), CliError> {
    let mut config = load_config(&a.common)?;
    if let Some(g) = a.gait {
        config.set_gait(g);
    }
    if let Some(n) = a.iters {
        config.ars.iterations = Some(n);
    }
    if let Some(n) = a.workers {
        config.ars.workers = Some(n);
    }
    if let Some(n) = a.steps {
        config.env.episode_steps = n;
    }
    config.validate()?;
    let spec = config.gaits()?;
    let ars = config.ars_config()?;
    let factory = config.env_factory()?;
    let out = config.output_dir.clone();
    prepare_dir(&out)?;

    let objective = MultiGaitObjective {
        factory: factory.clone(),
        spec: spec.clone(),
        steps: config.env.episode_steps,
    };
    let bundle_for = |theta: &DMatrix<f64>| -> Result<PolicyBundle, CliError> {
        Ok(PolicyBundle {
            matrix: PolicyMatrix::new(theta.clone()).map_err(|e| runtime("policy")(&e))?,
            correction: None,
            bounds: factory.config.workspace.radii,
            gait: spec.label(),
            seed: config.seed,
        })
    };
    let checkpoint_dir = out.join("checkpoints");
    let mut checkpoints = Vec::new();
    let mut checkpoint_error = None;
    let theta0 = DMatrix::zeros(DEFAULT_CONTROL_POINTS, STATE_DIM);
    let outcome = train_with(&objective, &ars, theta0, &mut |record, theta| {
        let every = ars.checkpoint_every;
        if every == 0 || (record.iteration + 1) % every != 0 || checkpoint_error.is_some() {
            return;
        }
        let name = format!("checkpoints/policy_iter_{:04}.json", record.iteration + 1);
        let saved = prepare_dir(&checkpoint_dir)
            .and_then(|_| bundle_for(theta))
            .and_then(|b| b.save(&out.join(&name)).map_err(|e| runtime(&name)(&e)));
        match saved {
            Ok(()) => checkpoints.push(name),
            Err(e) => checkpoint_error = Some(e),
        }
    })
    .map_err(|e| match e {
        ArsError::InvalidConfig(m) => CliError::Input(m),
        other => CliError::TrainingAborted(other),
    })?;
    if let Some(e) = checkpoint_error {
        return Err(e);
    }

    bundle_for(&outcome.theta)?
        .save(&out.join("policy.json"))
        .map_err(|e| runtime("policy.json")(&e))?;
    write_learning_curve(create(&out.join("learning_curve.csv"))?, &outcome.records)
        .map_err(|e| runtime("learning_curve.csv")(&e))?;
    write_text(&out.join("config.toml"), &config.to_toml())?;

    let mut manifest = Manifest::new("train", args, &config);
    if let Some(path) = &a.common.config {
        manifest
            .inputs
            .insert("config", sha256_hex(&read_input(path)?));
    }
    manifest.outputs = vec!["policy.json", "learning_curve.csv", "config.toml"];
    manifest
        .outputs
        .extend(checkpoints.iter().map(String::as_str));
    manifest.write(&out)?;
    println!(
        "trained {} for {} iterations: return {:.3} -> {:.3}; wrote {}",
        spec.label(),
        outcome.records.len(),
        outcome.initial_return,
        outcome.final_return(),
        out.join("policy.json").display()
    );
    Ok(())
}

fn cmd_rollout(a: &RolloutArgs, args: &[String]) -> Result<(), CliError> {
    let run = load_policy_run(&a.common, &a.policy, a.sim2real.as_deref())?;
    let gait = rollout_gait(a.gait, &run.config, &run.bundle)?;
    let factory = run.config.env_factory()?;
    let out = run.config.output_dir.clone();
    prepare_dir(&out)?;

    let mut env = factory.make(&gait).map_err(env_error)?;
    env.reset(&gait, run.config.seed);
    let mut recorder = TraceRecorder::new(a.record_every);
    let result = run_policy(
        &mut env,
        &run.bundle.matrix,
        a.steps,
        run.correction.as_ref(),
        Some(&mut recorder),
    )
    .map_err(env_error)?;

    recorder
        .write_csv(create(&out.join("trace.csv"))?, &[])
        .map_err(|e| runtime("trace.csv")(&e))?;
    write_actions(&out.join("actions.csv"), &result)?;
    let mut manifest = Manifest::new("rollout", args, &run.config);
    manifest
        .inputs
        .extend(run.inputs.iter().map(|(k, v)| (*k, v.clone())));
    manifest.outputs = vec!["trace.csv", "actions.csv"];
    manifest.write(&out)?;
    println!(
        "{}: {} gait steps, return {:.3}, x {:.3} m, yaw {:.3} rad",
        gait.name,
        result.steps(),
        result.total_return,
        result.x_positions.last().copied().unwrap_or(0.0),
        result.yaws.last().copied().unwrap_or(0.0)
    );
    if result.fell {
        return Err(CliError::Fell {
            steps: result.steps(),
            requested: a.steps,
        });
    }
    Ok(())
}

fn cmd_fit_sim2real(a: &FitArgs, args: &[String]) -> Result<(), CliError> {
    let config = load_config(&a.common)?;
    let bytes = read_input(&a.trace)?;
    let trace = StateTracePair::read_csv(bytes.as_slice())
        .map_err(|e| CliError::Input(format!("{}: {e}", a.trace.display())))?;
    let fit = fit_sim2real(&trace).map_err(|e| match e {
        PolicyError::RankDeficient { .. } => CliError::RankDeficient(e),
        other => CliError::Input(other.to_string()),
    })?;
    let out = config.output_dir.clone();
    prepare_dir(&out)?;
    write_text(
        &out.join("sim2real.json"),
        &(fit.to_json().map_err(|e| runtime("sim2real.json")(&e))? + "\n"),
    )?;
    let fail = runtime("residuals.csv");
    let mut w = csv::Writer::from_writer(create(&out.join("residuals.csv"))?);
    w.write_record(["joint", "rms_rad"]).map_err(|e| fail(&e))?;
    for (j, rms) in fit.residual_rms.iter().enumerate() {
        w.serialize((format!("q{j}"), rms)).map_err(|e| fail(&e))?;
    }
    w.flush().map_err(|e| fail(&e))?;

    let mut manifest = Manifest::new("fit-sim2real", args, &config);
    manifest.inputs.insert("trace", sha256_hex(&bytes));
    manifest.outputs = vec!["sim2real.json", "residuals.csv"];
    manifest.write(&out)?;
    println!(
        "fitted {} samples: max joint residual RMS {:.3e} rad, condition number {:.3e}",
        trace.len(),
        fit.max_residual(),
        fit.condition_number
    );
    Ok(())
}

fn parse_state(text: &str) -> Result<JointState, CliError> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Input(format!("--state: {e}")))?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Input("--state: angles must be finite".into()));
    }
    JointState::from_slice(&values).map_err(|e| CliError::Input(format!("--state: {e}")))
}

fn cmd_export_trajectory(a: &ExportArgs, args: &[String]) -> Result<(), CliError> {
    if a.resolution == 0 {
        return Err(CliError::Input("--resolution must be positive".into()));
    }
    let run = load_policy_run(&a.common, &a.policy, a.sim2real.as_deref())?;
    let gait = rollout_gait(a.gait, &run.config, &run.bundle)?;
    let workspace = run.config.env.workspace;
    let state = match &a.state {
        Some(text) => parse_state(text)?,
        None => {
            let mut env = run.config.env_factory()?.make(&gait).map_err(env_error)?;
            env.reset(&gait, run.config.seed)
        }
    };
    let action = match &run.correction {
        Some(map) => act_corrected(&run.bundle.matrix, map, &state, &workspace.radii),
        None => act(&run.bundle.matrix, &state, &workspace.radii),
    };
    let traj =
        build_trajectory(&action, &workspace.radii).map_err(|e| CliError::Input(e.to_string()))?;
    let out = run.config.output_dir.clone();
    prepare_dir(&out)?;
    let params = gait.params();
    let names: Vec<String> = Leg::ALL
        .iter()
        .map(|leg| format!("trajectory_{}.csv", leg.short_name().to_lowercase()))
        .collect();
    for (leg, name) in Leg::ALL.iter().zip(&names) {
        let i = leg.index();
        write_trajectory_csv(
            create(&out.join(name))?,
            &traj,
            &params.frames[i],
            params.offsets[i],
            &workspace,
            a.resolution,
        )
        .map_err(|e| runtime(name)(&e))?;
    }
    let mut manifest = Manifest::new("export-trajectory", args, &run.config);
    manifest
        .inputs
        .extend(run.inputs.iter().map(|(k, v)| (*k, v.clone())));
    manifest.outputs = names.iter().map(String::as_str).collect();
    manifest.write(&out)?;
    println!(
        "wrote {} samples per leg for {} to {}",
        a.resolution,
        gait.name,
        out.display()
    );
    Ok(())
}

fn cmd_transition(a: &TransitionArgs, args: &[String]) -> Result<(), CliError> {
    if !(a.alpha > 0.0 && a.alpha <= 1.0) {
        return Err(CliError::Input(format!(
            "--alpha {} must lie in (0, 1]",
            a.alpha
        )));
    }
    let run = load_policy_run(&a.common, &a.policy, a.sim2real.as_deref())?;
    let plan = TransitionPlan {
        from: named_gait(a.from, &run.config)?,
        to: named_gait(a.to, &run.config)?,
        alpha: a.alpha,
        switch_at: a.switch_at,
    };
    let factory = run.config.env_factory()?;
    let out = run.config.output_dir.clone();
    prepare_dir(&out)?;

    let mut env = factory.make(&plan.from).map_err(env_error)?;
    env.reset(&plan.from, run.config.seed);
    let mut recorder = TraceRecorder::new(a.record_every);
    let (result, schedule) = run_transition(
        &mut env,
        &run.bundle.matrix,
        &plan,
        a.steps,
        run.correction.as_ref(),
        Some(&mut recorder),
    )
    .map_err(env_error)?;

    recorder
        .write_csv(create(&out.join("trace.csv"))?, &TRANSITION_COLUMNS)
        .map_err(|e| runtime("trace.csv")(&e))?;
    write_actions(&out.join("actions.csv"), &result)?;
    let mut manifest = Manifest::new("transition", args, &run.config);
    manifest
        .inputs
        .extend(run.inputs.iter().map(|(k, v)| (*k, v.clone())));
    manifest.outputs = vec!["trace.csv", "actions.csv"];
    manifest.write(&out)?;
    println!(
        "{} -> {} (alpha {}): {} gait steps, final target gap {:.3e} m",
        plan.from.name,
        plan.to.name,
        a.alpha,
        result.steps(),
        schedule.last().map_or(0.0, |s| s.gap)
    );
    if result.fell {
        return Err(CliError::Fell {
            steps: result.steps(),
            requested: a.steps,
        });
    }
    Ok(())
}
