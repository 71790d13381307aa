//! A simplified quadruped simulator exposed as a gait-step decision process:
//! one call to [`QuadrupedEnv::step_gait`] runs a full half cycle.

mod physics;
mod reward;

use std::f64::consts::{PI, TAU};
use std::io::Write;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{inverse_kinematics, FootPoint, JointState, KneeBranch, Leg, STATE_DIM};
use crate::trajectory::{
    build_trajectory, foot_target_at, ControlPointSet, FootWorkspace, GaitConfig, GaitParams,
    PhaseState, RewardAxis,
};

pub use physics::{
    physics_substep, ContactParams, RobotModel, SubstepForces, WorldState, GRAVITY, MAX_SUBSTEP,
};
pub use reward::{accumulate_energy, compute_reward, EnergyMode, RewardWeights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("episode diverged: {0}")]
    EpisodeDiverged(String),
    #[error("episode already terminated by a fall")]
    EpisodeTerminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Physics substep in seconds.
    pub dt: f64,
    /// Seconds per gait step (half cycle).
    pub step_duration: f64,
    /// Gait steps per training episode.
    pub episode_steps: usize,
    /// Bound on the seeded joint perturbation applied at reset, radians.
    pub init_noise: f64,
    pub weights: RewardWeights,
    pub energy_mode: EnergyMode,
    pub contact: ContactParams,
    pub workspace: FootWorkspace,
    /// Fall when torso height drops below this fraction of nominal.
    pub fall_height_ratio: f64,
    /// Fall when |roll| or |pitch| exceeds this, radians.
    pub fall_tilt: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.001,
            step_duration: 0.25,
            episode_steps: 20,
            init_noise: 0.01,
            weights: RewardWeights::default(),
            energy_mode: EnergyMode::default(),
            contact: ContactParams::default(),
            workspace: FootWorkspace::default(),
            fall_height_ratio: 0.6,
            fall_tilt: 0.6,
        }
    }
}

impl EnvConfig {
    /// Substeps per gait step; the step duration must be a whole number of substeps.
    pub fn substeps(&self) -> Result<usize, EnvError> {
        if !(self.dt > 0.0 && self.dt <= MAX_SUBSTEP) {
            return Err(EnvError::InvalidConfig(format!(
                "dt {} outside (0, {MAX_SUBSTEP}]",
                self.dt
            )));
        }
        if !(self.step_duration > self.dt) {
            return Err(EnvError::InvalidConfig(
                "step duration must exceed dt".into(),
            ));
        }
        let n = (self.step_duration / self.dt).round();
        if (n * self.dt - self.step_duration).abs() > 1e-9 * self.step_duration.max(1.0) {
            return Err(EnvError::InvalidConfig(format!(
                "step duration {} is not a whole number of {}-second substeps",
                self.step_duration, self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.substeps()?;
        self.contact.validate()?;
        if !self.weights.is_valid() {
            return Err(EnvError::InvalidConfig(
                "reward weights must be non-negative".into(),
            ));
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return Err(EnvError::InvalidConfig(
                "init_noise must be non-negative".into(),
            ));
        }
        if !(self.fall_height_ratio > 0.0 && self.fall_height_ratio < 1.0) {
            return Err(EnvError::InvalidConfig(
                "fall_height_ratio must lie in (0, 1)".into(),
            ));
        }
        if !(self.fall_tilt > 0.0) {
            return Err(EnvError::InvalidConfig("fall_tilt must be positive".into()));
        }
        if self.workspace.center_depth <= 0.0 {
            return Err(EnvError::InvalidConfig(
                "workspace center depth must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Diagnostics of one gait step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Progress along the gait's reward axis (m or rad).
    pub delta: f64,
    /// Energy spent during the step (J).
    pub energy: f64,
    pub reward: f64,
    pub displacement: Vector3<f64>,
    pub yaw_change: f64,
    /// Foot targets that had to be clamped into the workspace.
    pub clamped_targets: usize,
    /// Foot targets IK could not solve; the previous target was held.
    pub ik_failures: usize,
    /// Largest |target − angle| over the joints during the last quarter of the step.
    pub tracking_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Motor angles at the gait-step boundary.
    pub state: JointState,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One row of a rollout trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub phase: f64,
    pub position: Vector3<f64>,
    pub rpy: (f64, f64, f64),
    pub joints: [f64; STATE_DIM],
    /// Set on the last substep of a gait step.
    pub boundary: bool,
    /// Step reward on boundary rows, zero otherwise.
    pub reward: f64,
    /// Caller-defined columns (for example blend parameters).
    pub extra: Vec<f64>,
}

/// Collects every `every`-th substep and all gait-step boundaries.
#[derive(Debug, Clone, Default)]
pub struct TraceRecorder {
    pub every: usize,
    pub rows: Vec<TraceSample>,
    /// Appended to each row recorded during the current step.
    pub extra: Vec<f64>,
}

impl TraceRecorder {
    pub fn new(every: usize) -> Self {
        Self {
            every: every.max(1),
            rows: Vec::new(),
            extra: Vec::new(),
        }
    }

    pub fn boundaries(&self) -> usize {
        self.rows.iter().filter(|r| r.boundary).count()
    }

    /// Writes `t_s, phase, base_x, base_y, base_z, roll, pitch, yaw, q0..q11,
    /// boundary, reward` followed by `extra_headers`.
    pub fn write_csv<W: Write>(&self, out: W, extra_headers: &[&str]) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "t_s", "phase", "base_x", "base_y", "base_z", "roll", "pitch", "yaw",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..STATE_DIM).map(|i| format!("q{i}")));
        header.push("boundary".into());
        header.push("reward".into());
        header.extend(extra_headers.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut row: Vec<String> = vec![
                r.t.to_string(),
                r.phase.to_string(),
                r.position.x.to_string(),
                r.position.y.to_string(),
                r.position.z.to_string(),
                r.rpy.0.to_string(),
                r.rpy.1.to_string(),
                r.rpy.2.to_string(),
            ];
            row.extend(r.joints.iter().map(|q| q.to_string()));
            row.push(u8::from(r.boundary).to_string());
            row.push(r.reward.to_string());
            row.extend(r.extra.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn angle_diff(to: f64, from: f64) -> f64 {
    let d = (to - from).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// The state the policy sees: at steps starting at `π` the left and right
/// legs are swapped so both halves of the trot present the same layout.
pub fn canonical_observation(state: &JointState, phase: f64) -> JointState {
    if phase >= PI {
        state.mirrored()
    } else {
        state.clone()
    }
}

#[derive(Debug, Clone)]
pub struct QuadrupedEnv {
    model: RobotModel,
    config: EnvConfig,
    gait: GaitConfig,
    world: WorldState,
    substeps: usize,
    done: bool,
    steps_taken: usize,
    time: f64,
    cumulative_yaw: f64,
}

impl QuadrupedEnv {
    pub fn new(model: RobotModel, config: EnvConfig, gait: &GaitConfig) -> Result<Self, EnvError> {
        model.validate()?;
        config.validate()?;
        let substeps = config.substeps()?;
        let phase = PhaseState::new(0.0, config.step_duration)
            .map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        let mut env = Self {
            world: WorldState::at_rest(Vector3::zeros(), [0.0; STATE_DIM], phase),
            model,
            config,
            gait: gait.clone(),
            substeps,
            done: false,
            steps_taken: 0,
            time: 0.0,
            cumulative_yaw: 0.0,
        };
        env.nominal_angles()?;
        env.reset(gait, 0);
        Ok(env)
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn gait(&self) -> &GaitConfig {
        &self.gait
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut WorldState {
        &mut self.world
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Yaw accumulated over all steps since reset, unwrapped.
    pub fn cumulative_yaw(&self) -> f64 {
        self.cumulative_yaw
    }

    /// Switches the reward axis (and default planes) without touching the
    /// physical state.
    pub fn set_gait(&mut self, gait: &GaitConfig) {
        self.gait = gait.clone();
    }

    /// Standing pose: every foot at the bottom of a mid-radius loop.
    pub fn nominal_angles(&self) -> Result<[f64; STATE_DIM], EnvError> {
        let ws = &self.config.workspace;
        let foot = FootPoint::new(0.0, -(ws.center_depth + ws.radii.mid()), 0.0);
        let mut q = [0.0; STATE_DIM];
        for leg in Leg::ALL {
            let a = inverse_kinematics(
                &self.model.legs[leg.index()],
                &self.model.limits,
                &foot,
                KneeBranch::Backward,
            )
            .map_err(|e| EnvError::InvalidConfig(format!("nominal stance unreachable: {e}")))?;
            q[3 * leg.index()..3 * leg.index() + 3].copy_from_slice(&a.as_array());
        }
        Ok(q)
    }

    /// Poses the robot at nominal stance with phase 0; `seed` perturbs the
    /// joint angles by at most `init_noise`.
    pub fn reset(&mut self, gait: &GaitConfig, seed: u64) -> JointState {
        self.gait = gait.clone();
        let mut q = self.nominal_angles().expect("checked in new");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = self.config.init_noise;
        for v in q.iter_mut() {
            if noise > 0.0 {
                *v += rng.random_range(-noise..=noise);
            }
        }
        let ws = &self.config.workspace;
        let depth = ws.center_depth + ws.radii.mid();
        let sag =
            self.model.mass * self.model.gravity / (4.0 * self.config.contact.stiffness.max(1.0));
        let base = Vector3::new(0.0, self.config.contact.ground_height + depth - sag, 0.0);
        let phase = PhaseState::new(0.0, self.config.step_duration).expect("validated");
        self.world = WorldState::at_rest(base, q, phase);
        self.done = false;
        self.steps_taken = 0;
        self.time = 0.0;
        self.cumulative_yaw = 0.0;
        self.joint_state()
    }

    pub fn joint_state(&self) -> JointState {
        JointState::new(self.world.joint_angles).expect("world state is finite")
    }

    /// Observation for the policy; see [`canonical_observation`].
    pub fn observation(&self) -> JointState {
        canonical_observation(&self.joint_state(), self.world.phase.phi)
    }

    fn fallen(&self) -> bool {
        let (roll, pitch, _) = self.world.euler();
        self.world.height() - self.config.contact.ground_height
            < self.config.fall_height_ratio * self.model.nominal_height
            || roll.abs() > self.config.fall_tilt
            || pitch.abs() > self.config.fall_tilt
    }

    fn pd_torques(
        &self,
        q_d: &[f64; STATE_DIM],
        qd_d: &[f64; STATE_DIM],
        qdd_d: &[f64; STATE_DIM],
    ) -> [f64; STATE_DIM] {
        let m = &self.model;
        std::array::from_fn(|j| {
            let tau = m.kp * (q_d[j] - self.world.joint_angles[j])
                + m.kd * (qd_d[j] - self.world.joint_velocities[j])
                + m.joint_inertia * qdd_d[j];
            tau.clamp(-m.torque_cap, m.torque_cap)
        })
    }

    /// Runs one gait step with the gait's own plane parameters.
    pub fn step_gait(&mut self, actions: &ControlPointSet) -> Result<StepOutcome, EnvError> {
        let params = self.gait.params();
        self.step_gait_with(actions, &params, None)
    }

    /// Runs one gait step: builds the shared spline from `actions`, places
    /// each leg's loop on its plane with its phase offset and tracks the IK
    /// targets with PD control until the phase has advanced by `π`.
    pub fn step_gait_with(
        &mut self,
        actions: &ControlPointSet,
        params: &GaitParams,
        mut recorder: Option<&mut TraceRecorder>,
    ) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeTerminated);
        }
        let ws = self.config.workspace;
        let traj = build_trajectory(actions, &ws.radii)
            .map_err(|e| EnvError::InvalidAction(e.to_string()))?;
        let n = self.substeps;
        let dt = self.config.dt;
        let phi0 = self.world.phase.phi;

        // Joint targets at substeps -1..=n of this step.
        let mut clamped = 0;
        let mut ik_failures = 0;
        let mut targets = vec![[0.0; STATE_DIM]; n + 2];
        let mut previous = self.world.joint_angles;
        for (slot, target) in targets.iter_mut().enumerate() {
            let phi = phi0 + PI * (slot as f64 - 1.0) / n as f64;
            for leg in Leg::ALL {
                let i = leg.index();
                let ft = foot_target_at(&traj, phi + params.offsets[i], &params.frames[i], &ws);
                clamped += usize::from(ft.clamped);
                let range = 3 * i..3 * i + 3;
                match inverse_kinematics(
                    &self.model.legs[i],
                    &self.model.limits,
                    &ft.point,
                    KneeBranch::Backward,
                ) {
                    Ok(a) => target[range].copy_from_slice(&a.as_array()),
                    Err(_) => {
                        ik_failures += 1;
                        target[range.clone()].copy_from_slice(&previous[range]);
                    }
                }
            }
            previous = *target;
        }

        let start_position = self.world.position;
        let (_, _, start_yaw) = self.world.euler();
        let mut energy = 0.0;
        let mut fell = false;
        let mut tracking_error: f64 = 0.0;
        let inv2dt = 0.5 / dt;
        let invdt2 = 1.0 / (dt * dt);
        for k in 0..n {
            let (prev, cur, next) = (&targets[k], &targets[k + 1], &targets[k + 2]);
            let qd_d: [f64; STATE_DIM] = std::array::from_fn(|j| (next[j] - prev[j]) * inv2dt);
            let qdd_d: [f64; STATE_DIM] =
                std::array::from_fn(|j| (next[j] - 2.0 * cur[j] + prev[j]) * invdt2);
            let tau = self.pd_torques(cur, &qd_d, &qdd_d);
            let (mut next_world, _) =
                physics_substep(&self.model, &self.config.contact, &self.world, &tau, dt)?;
            energy += accumulate_energy(
                &tau,
                &next_world.joint_velocities,
                dt,
                self.config.energy_mode,
            );
            next_world.phase.phi = phi0 + PI * (k + 1) as f64 / n as f64;
            self.world = next_world;
            if 4 * k >= 3 * n {
                for (target, q) in next.iter().zip(&self.world.joint_angles) {
                    tracking_error = tracking_error.max((target - q).abs());
                }
            }
            fell |= self.fallen();
            let boundary = k + 1 == n;
            if let Some(rec) = recorder.as_deref_mut() {
                if (k + 1) % rec.every == 0 || boundary {
                    rec.rows.push(TraceSample {
                        t: self.time + (k + 1) as f64 * dt,
                        phase: if boundary {
                            (phi0 + PI) % TAU
                        } else {
                            self.world.phase.phi
                        },
                        position: self.world.position,
                        rpy: self.world.euler(),
                        joints: self.world.joint_angles,
                        boundary,
                        reward: 0.0,
                        extra: rec.extra.clone(),
                    });
                }
            }
        }
        // Land exactly on the boundary.
        self.world.phase.phi = if phi0 < PI { PI } else { 0.0 };
        self.world.energy = 0.0;
        self.time += n as f64 * dt;
        self.steps_taken += 1;

        let displacement = self.world.position - start_position;
        let (_, _, end_yaw) = self.world.euler();
        let yaw_change = angle_diff(end_yaw, start_yaw);
        self.cumulative_yaw += yaw_change;
        let delta = match self.gait.reward_axis {
            RewardAxis::PlusX => displacement.x,
            RewardAxis::MinusX => -displacement.x,
            RewardAxis::PlusZ => displacement.z,
            RewardAxis::PlusYaw => yaw_change,
        };
        let reward = compute_reward(delta, energy, &self.config.weights);
        if let Some(rec) = recorder {
            if let Some(last) = rec.rows.last_mut() {
                last.reward = reward;
            }
        }
        self.done = fell;
        Ok(StepOutcome {
            state: self.joint_state(),
            reward,
            done: fell,
            info: StepInfo {
                delta,
                energy,
                reward,
                displacement,
                yaw_change,
                clamped_targets: clamped,
                ik_failures,
                tracking_error,
            },
        })
    }

    /// Holds the current joint targets fixed for `duration` seconds without
    /// advancing the phase and returns the final contact forces.
    pub fn hold(
        &mut self,
        targets: &[f64; STATE_DIM],
        duration: f64,
    ) -> Result<SubstepForces, EnvError> {
        let steps = (duration / self.config.dt).round().max(1.0) as usize;
        let zero = [0.0; STATE_DIM];
        let mut forces = SubstepForces {
            contact: [Vector3::zeros(); 4],
        };
        for _ in 0..steps {
            let tau = self.pd_torques(targets, &zero, &zero);
            let (next, f) = physics_substep(
                &self.model,
                &self.config.contact,
                &self.world,
                &tau,
                self.config.dt,
            )?;
            self.world = next;
            forces = f;
        }
        self.time += steps as f64 * self.config.dt;
        Ok(forces)
    }
}
