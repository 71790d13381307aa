//! TOML run configuration: robot, gait or gait mix, ARS and environment
//! sections plus the output directory and master seed.
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/trot"
//!
//! [gait]
//! name = "forward_trot"
//!
//! [ars]
//! iterations = 40
//! workers = 4
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ars::ArsConfig;
use crate::env::{EnvConfig, RobotModel};
use crate::gaits::{gait_config, EnvFactory, MultiGaitSpec};
use crate::kinematics::{JointLimits, LegGeometry, Side};
use crate::trajectory::{GaitConfig, GaitName, GaitPlane, PlaneKind, RewardAxis, Sweep};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Parse and schema errors; the message carries the line and column.
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.to_string(),
    }
}

/// Torso and leg parameters; legs are identical and placed symmetrically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotSection {
    pub mass: f64,
    /// Body-frame principal inertia (roll, yaw, pitch axes).
    pub inertia: [f64; 3],
    pub upper_link: f64,
    pub lower_link: f64,
    /// Hip distance ahead of and behind the center of mass.
    pub hip_x: f64,
    /// Hip distance to either side of the center of mass.
    pub hip_z: f64,
    pub abduction_axis_offset: f64,
    pub limits: JointLimits,
    pub kp: f64,
    pub kd: f64,
    pub torque_cap: f64,
    pub joint_inertia: f64,
    pub nominal_height: f64,
}

impl Default for RobotSection {
    fn default() -> Self {
        let m = RobotModel::default();
        let fl = &m.legs[0];
        Self {
            mass: m.mass,
            inertia: [m.inertia[(0, 0)], m.inertia[(1, 1)], m.inertia[(2, 2)]],
            upper_link: fl.upper_link_length,
            lower_link: fl.lower_link_length,
            hip_x: fl.hip_offset.x,
            hip_z: fl.hip_offset.z.abs(),
            abduction_axis_offset: fl.abduction_axis_offset,
            limits: m.limits,
            kp: m.kp,
            kd: m.kd,
            torque_cap: m.torque_cap,
            joint_inertia: m.joint_inertia,
            nominal_height: m.nominal_height,
        }
    }
}

impl RobotSection {
    pub fn build(&self) -> Result<RobotModel, ConfigError> {
        let leg = |x: f64, side: Side| {
            let z = side.outward() * self.hip_z;
            LegGeometry::new(
                self.upper_link,
                self.lower_link,
                Vector3::new(x, 0.0, z),
                self.abduction_axis_offset,
                side,
            )
            .map_err(|e| invalid("robot", e))
        };
        let model = RobotModel {
            mass: self.mass,
            inertia: Matrix3::from_diagonal(&Vector3::from(self.inertia)),
            legs: [
                leg(self.hip_x, Side::Left)?,
                leg(self.hip_x, Side::Right)?,
                leg(-self.hip_x, Side::Left)?,
                leg(-self.hip_x, Side::Right)?,
            ],
            limits: self.limits,
            kp: self.kp,
            kd: self.kd,
            torque_cap: self.torque_cap,
            joint_inertia: self.joint_inertia,
            nominal_height: self.nominal_height,
            ..RobotModel::default()
        };
        model.validate().map_err(|e| invalid("robot", e))?;
        Ok(model)
    }
}

/// A shipped gait, optionally with its planes, offsets or reward axis
/// replaced. Per-leg arrays are ordered FL, FR, BL, BR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitSection {
    pub name: GaitName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane_kinds: Option<[PlaneKind; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane_yaws: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<[Sweep; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_offsets: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_axis: Option<RewardAxis>,
    /// Weight in a gait mix; must be 1 for a single gait.
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl GaitSection {
    pub fn named(name: GaitName) -> Self {
        Self {
            name,
            plane_kinds: None,
            plane_yaws: None,
            sweeps: None,
            phase_offsets: None,
            reward_axis: None,
            weight: 1.0,
        }
    }

    pub fn resolve(&self, key: &str) -> Result<GaitConfig, ConfigError> {
        let mut g = gait_config(self.name);
        for i in 0..4 {
            let base = g.leg_planes[i];
            let kind = self.plane_kinds.map_or(base.kind, |k| k[i]);
            let yaw = self.plane_yaws.map_or(base.yaw, |y| y[i]);
            let sweep = self.sweeps.map_or(base.sweep, |s| s[i]);
            g.leg_planes[i] = GaitPlane::new(kind, yaw, sweep)
                .map_err(|e| invalid(&format!("{key}.plane_yaws"), e))?;
        }
        if let Some(offsets) = self.phase_offsets {
            if offsets.iter().any(|o| !o.is_finite()) {
                return Err(invalid(
                    &format!("{key}.phase_offsets"),
                    "offsets must be finite",
                ));
            }
            g.phase_offsets = offsets;
        }
        if let Some(axis) = self.reward_axis {
            g.reward_axis = axis;
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(invalid(&format!("{key}.weight"), "weight must be positive"));
        }
        Ok(g)
    }
}

/// ARS settings; unset step size and noise fall back to the gait's tuned
/// values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size_beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_directions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_directions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub robot: RobotSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gait: Option<GaitSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub multi_gait: Vec<GaitSection>,
    #[serde(default)]
    pub ars: ArsSection,
    #[serde(default)]
    pub env: EnvConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: default_output_dir(),
            robot: RobotSection::default(),
            gait: None,
            multi_gait: Vec::new(),
            ars: ArsSection::default(),
            env: EnvConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if i64::try_from(self.seed).is_err() {
            return Err(invalid("seed", "must not exceed 2^63 - 1"));
        }
        if self.gait.is_some() && !self.multi_gait.is_empty() {
            return Err(invalid(
                "gait",
                "give either [gait] or [[multi_gait]], not both",
            ));
        }
        if let Some(g) = &self.gait {
            if g.weight != 1.0 {
                return Err(invalid("gait.weight", "a single gait has weight 1"));
            }
        }
        self.robot.build()?;
        self.gaits()?;
        self.env.validate().map_err(|e| invalid("env", e))?;
        self.ars_config()?
            .validate()
            .map_err(|e| invalid("ars", e))?;
        Ok(())
    }

    /// The configured gait entries; a lone forward trot when none are given.
    pub fn gaits(&self) -> Result<MultiGaitSpec, ConfigError> {
        let entries = match (&self.gait, self.multi_gait.as_slice()) {
            (Some(g), _) => vec![(g.resolve("gait")?, 1.0)],
            (None, []) => vec![(gait_config(GaitName::ForwardTrot), 1.0)],
            (None, list) => list
                .iter()
                .enumerate()
                .map(|(i, g)| Ok((g.resolve(&format!("multi_gait[{i}]"))?, g.weight)))
                .collect::<Result<_, ConfigError>>()?,
        };
        MultiGaitSpec::new(entries).map_err(|e| invalid("multi_gait", e))
    }

    pub fn primary_gait(&self) -> GaitName {
        self.gait
            .as_ref()
            .or(self.multi_gait.first())
            .map_or(GaitName::ForwardTrot, |g| g.name)
    }

    pub fn ars_config(&self) -> Result<ArsConfig, ConfigError> {
        let base = ArsConfig::for_gait(self.primary_gait());
        let a = &self.ars;
        let config = ArsConfig {
            step_size_beta: a.step_size_beta.unwrap_or(base.step_size_beta),
            noise_nu: a.noise_nu.unwrap_or(base.noise_nu),
            num_directions: a.num_directions.unwrap_or(base.num_directions),
            top_directions: a.top_directions.unwrap_or(base.top_directions),
            iterations: a.iterations.unwrap_or(base.iterations),
            seed: self.seed,
            workers: a.workers.unwrap_or(base.workers),
            checkpoint_every: a.checkpoint_every.unwrap_or(base.checkpoint_every),
        };
        Ok(config)
    }

    pub fn env_factory(&self) -> Result<EnvFactory, ConfigError> {
        Ok(EnvFactory {
            model: self.robot.build()?,
            config: self.env,
        })
    }

    /// Replaces any gait or gait mix with a single shipped gait.
    pub fn set_gait(&mut self, name: GaitName) {
        self.gait = Some(GaitSection::named(name));
        self.multi_gait.clear();
    }
}
