//! The four shipped gaits, policy rollouts and the objectives ARS optimizes.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::ars::{ArsError, Objective};
use crate::env::{
    canonical_observation, EnvConfig, EnvError, QuadrupedEnv, RobotModel, TraceRecorder,
};
use crate::policy::{act, PolicyMatrix, Sim2RealMap};
use crate::trajectory::{
    build_trajectory, target_gap, ControlPointSet, GaitBlender, GaitConfig, GaitName, GaitParams,
    GaitPlane, PlaneKind, RewardAxis, Sweep, TrajectoryError,
};

pub const TROT_OFFSETS: [f64; 4] = [0.0, PI, PI, 0.0];

/// The shipped configuration of `name`.
pub fn gait_config(name: GaitName) -> GaitConfig {
    let plane = |kind, yaw, sweep| GaitPlane::new(kind, yaw, sweep).expect("yaw within range");
    let leg_planes = match name {
        GaitName::ForwardTrot => [plane(PlaneKind::Sagittal, 0.0, Sweep::Forward); 4],
        GaitName::BackwardTrot => [plane(PlaneKind::Sagittal, 0.0, Sweep::Reverse); 4],
        GaitName::SideStep => [plane(PlaneKind::Frontal, 0.0, Sweep::Forward); 4],
        // Front planes face inward, back planes outward; left legs run their
        // loops backwards so every foot pushes the body counter-clockwise.
        GaitName::Turn => [
            plane(PlaneKind::Sagittal, FRAC_PI_4, Sweep::Reverse),
            plane(PlaneKind::Sagittal, -FRAC_PI_4, Sweep::Forward),
            plane(PlaneKind::Sagittal, -FRAC_PI_4, Sweep::Reverse),
            plane(PlaneKind::Sagittal, FRAC_PI_4, Sweep::Forward),
        ],
    };
    let reward_axis = match name {
        GaitName::ForwardTrot => RewardAxis::PlusX,
        GaitName::BackwardTrot => RewardAxis::MinusX,
        GaitName::SideStep => RewardAxis::PlusZ,
        GaitName::Turn => RewardAxis::PlusYaw,
    };
    GaitConfig {
        name,
        leg_planes,
        phase_offsets: TROT_OFFSETS,
        reward_axis,
    }
}

/// Named gait configurations; lookups hand out copies.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitLibrary {
    entries: BTreeMap<GaitName, GaitConfig>,
}

impl Default for GaitLibrary {
    fn default() -> Self {
        Self {
            entries: GaitName::ALL.iter().map(|&n| (n, gait_config(n))).collect(),
        }
    }
}

impl GaitLibrary {
    pub fn get(&self, name: GaitName) -> GaitConfig {
        self.entries[&name].clone()
    }

    pub fn by_name(&self, name: &str) -> Result<GaitConfig, TrajectoryError> {
        Ok(self.get(name.parse()?))
    }

    /// Replaces an entry, for experiments with custom planes or offsets.
    pub fn insert(&mut self, config: GaitConfig) {
        self.entries.insert(config.name, config);
    }

    pub fn names(&self) -> impl Iterator<Item = GaitName> + '_ {
        self.entries.keys().copied()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{gait}: {source}")]
pub struct GaitError {
    pub gait: GaitName,
    #[source]
    pub source: EnvError,
}

/// Gaits scored together with one shared policy.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiGaitSpec {
    entries: Vec<(GaitConfig, f64)>,
}

impl MultiGaitSpec {
    pub fn new(entries: Vec<(GaitConfig, f64)>) -> Result<Self, EnvError> {
        if entries.is_empty() {
            return Err(EnvError::InvalidConfig(
                "multi-gait spec needs at least one gait".into(),
            ));
        }
        if entries.iter().any(|(_, w)| !(w.is_finite() && *w > 0.0)) {
            return Err(EnvError::InvalidConfig(
                "multi-gait weights must be positive".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn single(gait: GaitConfig) -> Self {
        Self {
            entries: vec![(gait, 1.0)],
        }
    }

    pub fn entries(&self) -> &[(GaitConfig, f64)] {
        &self.entries
    }

    /// `forward_trot*1+turn*2` style label.
    pub fn label(&self) -> String {
        if let [(g, w)] = self.entries.as_slice() {
            if *w == 1.0 {
                return g.name.to_string();
            }
        }
        self.entries
            .iter()
            .map(|(g, w)| format!("{}*{}", g.name, w))
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Builds fresh environments from shared immutable parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnvFactory {
    pub model: RobotModel,
    pub config: EnvConfig,
}

impl EnvFactory {
    pub fn make(&self, gait: &GaitConfig) -> Result<QuadrupedEnv, EnvError> {
        QuadrupedEnv::new(self.model.clone(), self.config, gait)
    }
}

/// Control points the policy emits in the environment's current state.
///
/// With a correction the raw motor angles are mapped first and the result
/// is then put into the policy's canonical leg layout.
pub fn policy_action(
    env: &QuadrupedEnv,
    policy: &PolicyMatrix,
    correction: Option<&Sim2RealMap>,
) -> ControlPointSet {
    let bounds = env.config().workspace.radii;
    let obs = match correction {
        Some(map) => canonical_observation(&map.apply(&env.joint_state()), env.world().phase.phi),
        None => env.observation(),
    };
    act(policy, &obs, &bounds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub total_return: f64,
    pub rewards: Vec<f64>,
    pub actions: Vec<ControlPointSet>,
    pub fell: bool,
    /// World x displacement after each step.
    pub x_positions: Vec<f64>,
    /// Unwrapped yaw after each step.
    pub yaws: Vec<f64>,
}

impl EpisodeResult {
    pub fn steps(&self) -> usize {
        self.rewards.len()
    }
}

/// Runs `policy` for up to `steps` gait steps from `reset(gait, seed)`,
/// stopping early on a fall. The undiscounted reward sum is the return.
pub fn run_episode(
    factory: &EnvFactory,
    gait: &GaitConfig,
    policy: &PolicyMatrix,
    steps: usize,
    seed: u64,
) -> Result<EpisodeResult, EnvError> {
    let mut env = factory.make(gait)?;
    env.reset(gait, seed);
    run_policy(&mut env, policy, steps, None, None)
}

impl EpisodeResult {
    fn with_capacity(steps: usize) -> Self {
        Self {
            total_return: 0.0,
            rewards: Vec::with_capacity(steps),
            actions: Vec::with_capacity(steps),
            fell: false,
            x_positions: Vec::with_capacity(steps),
            yaws: Vec::with_capacity(steps),
        }
    }

    fn record(&mut self, env: &QuadrupedEnv, action: ControlPointSet, reward: f64, start_x: f64) {
        self.total_return += reward;
        self.rewards.push(reward);
        self.actions.push(action);
        self.x_positions.push(env.world().position.x - start_x);
        self.yaws.push(env.cumulative_yaw());
    }
}

/// Drives an already reset environment with the gait's own planes.
pub fn run_policy(
    env: &mut QuadrupedEnv,
    policy: &PolicyMatrix,
    steps: usize,
    correction: Option<&Sim2RealMap>,
    mut recorder: Option<&mut TraceRecorder>,
) -> Result<EpisodeResult, EnvError> {
    let mut result = EpisodeResult::with_capacity(steps);
    let start_x = env.world().position.x;
    for _ in 0..steps {
        let action = policy_action(env, policy, correction);
        let params = env.gait().params();
        let out = env.step_gait_with(&action, &params, recorder.as_deref_mut())?;
        result.record(env, action, out.reward, start_x);
        if out.done {
            result.fell = true;
            break;
        }
    }
    Ok(result)
}

/// A mid-run switch from one gait to another through the plane filter.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPlan {
    pub from: GaitConfig,
    pub to: GaitConfig,
    /// Filter coefficient in `(0, 1]`; 1 switches in a single step.
    pub alpha: f64,
    /// Gait step at which the target changes to `to`.
    pub switch_at: usize,
}

/// Plane parameters used for one gait step of a transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionStep {
    pub params: GaitParams,
    /// Largest foot-target displacement from the previous step's parameters
    /// at matched phase, on this step's trajectory.
    pub gap: f64,
}

/// Phases sampled per leg when measuring the target gap.
pub const GAP_SAMPLES: usize = 360;

/// Extra trace columns written by [`run_transition`], in order.
pub const TRANSITION_COLUMNS: [&str; 13] = [
    "blend_heading_fl",
    "blend_heading_fr",
    "blend_heading_bl",
    "blend_heading_br",
    "blend_sweep_fl",
    "blend_sweep_fr",
    "blend_sweep_bl",
    "blend_sweep_br",
    "blend_offset_fl",
    "blend_offset_fr",
    "blend_offset_bl",
    "blend_offset_br",
    "blend_gap_m",
];

/// Runs `policy` while blending the planes from `plan.from` toward
/// `plan.to`. The reward axis switches with the target.
pub fn run_transition(
    env: &mut QuadrupedEnv,
    policy: &PolicyMatrix,
    plan: &TransitionPlan,
    steps: usize,
    correction: Option<&Sim2RealMap>,
    mut recorder: Option<&mut TraceRecorder>,
) -> Result<(EpisodeResult, Vec<TransitionStep>), EnvError> {
    let mut blender = GaitBlender::new(&plan.from, plan.alpha)
        .map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
    env.set_gait(&plan.from);
    let workspace = env.config().workspace;
    let mut result = EpisodeResult::with_capacity(steps);
    let mut schedule = Vec::with_capacity(steps);
    let mut previous = plan.from.params();
    let start_x = env.world().position.x;
    for k in 0..steps {
        if k == plan.switch_at {
            blender.set_target(&plan.to);
            env.set_gait(&plan.to);
        }
        let params = *blender.step();
        let action = policy_action(env, policy, correction);
        let traj = build_trajectory(&action, &workspace.radii)
            .map_err(|e| EnvError::InvalidAction(e.to_string()))?;
        let gap = target_gap(&traj, &previous, &params, &workspace, GAP_SAMPLES);
        if let Some(rec) = recorder.as_deref_mut() {
            rec.extra = params
                .frames
                .iter()
                .map(|f| f.heading)
                .chain(params.frames.iter().map(|f| f.sweep_gain))
                .chain(params.offsets)
                .chain([gap])
                .collect();
        }
        let out = env.step_gait_with(&action, &params, recorder.as_deref_mut())?;
        result.record(env, action, out.reward, start_x);
        schedule.push(TransitionStep { params, gap });
        previous = params;
        if out.done {
            result.fell = true;
            break;
        }
    }
    Ok((result, schedule))
}

/// Weighted sum of per-gait episode returns of one shared policy, summed in
/// spec order.
pub fn multi_gait_return(
    policy: &PolicyMatrix,
    spec: &MultiGaitSpec,
    factory: &EnvFactory,
    steps: usize,
    seed: u64,
) -> Result<f64, GaitError> {
    let mut total = 0.0;
    for (gait, weight) in spec.entries() {
        let r = run_episode(factory, gait, policy, steps, seed).map_err(|source| GaitError {
            gait: gait.name,
            source,
        })?;
        total += weight * r.total_return;
    }
    Ok(total)
}

fn as_policy(theta: &DMatrix<f64>) -> Result<PolicyMatrix, ArsError> {
    PolicyMatrix::new(theta.clone()).map_err(|e| ArsError::InvalidConfig(e.to_string()))
}

/// Episode return of one gait.
#[derive(Debug, Clone)]
pub struct EpisodeObjective {
    pub factory: EnvFactory,
    pub gait: GaitConfig,
    pub steps: usize,
}

impl Objective for EpisodeObjective {
    fn evaluate(&self, theta: &DMatrix<f64>, env_seed: u64) -> Result<f64, ArsError> {
        run_episode(
            &self.factory,
            &self.gait,
            &as_policy(theta)?,
            self.steps,
            env_seed,
        )
        .map(|r| r.total_return)
        .map_err(|e| ArsError::EpisodeDiverged(format!("{}: {e}", self.gait.name)))
    }
}

/// Combined return of several gaits sharing one policy.
#[derive(Debug, Clone)]
pub struct MultiGaitObjective {
    pub factory: EnvFactory,
    pub spec: MultiGaitSpec,
    pub steps: usize,
}

impl Objective for MultiGaitObjective {
    fn evaluate(&self, theta: &DMatrix<f64>, env_seed: u64) -> Result<f64, ArsError> {
        multi_gait_return(
            &as_policy(theta)?,
            &self.spec,
            &self.factory,
            self.steps,
            env_seed,
        )
        .map_err(|e| ArsError::EpisodeDiverged(e.to_string()))
    }
}
