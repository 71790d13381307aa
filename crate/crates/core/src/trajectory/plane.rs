//! Trajectory planes and the polar-to-Cartesian foot target map.
//!
//! A foot spline lives in a vertical plane through the polar center, a point
//! `center_depth` below the hip. The plane's horizontal axis has a heading
//! measured from body `+x` toward body `+z` (right). With phase `θ` and radius
//! `r` the in-plane coordinates are
//!
//! ```text
//! u = sweep · r · cos θ      (along the horizontal axis)
//! v = -r · sin θ             (vertical)
//! ```
//!
//! so `θ ∈ [0, π)` is the lower (stance) arc, traversed from the front of the
//! axis to its back when `sweep = +1`, and `θ ∈ [π, 2π)` is the swing arc.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use super::spline::{FootTrajectory, RadiusBounds};
use super::{PhaseState, TrajectoryError};
use crate::kinematics::{FootPoint, Leg, WorkspaceBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneKind {
    /// The `x-y` plane, optionally yawed about the vertical.
    Sagittal,
    /// The `y-z` plane.
    Frontal,
}

/// Direction in which the stance arc is traversed along the plane axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// Foot moves toward `-axis` on the ground, pushing the body along `+axis`.
    #[default]
    Forward,
    Reverse,
}

impl Sweep {
    pub fn gain(self) -> f64 {
        match self {
            Sweep::Forward => 1.0,
            Sweep::Reverse => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitPlane {
    pub kind: PlaneKind,
    /// Rotation about the vertical, radians in `[-π, π]`.
    pub yaw: f64,
    #[serde(default)]
    pub sweep: Sweep,
}

impl GaitPlane {
    pub fn new(kind: PlaneKind, yaw: f64, sweep: Sweep) -> Result<Self, TrajectoryError> {
        if !(yaw.is_finite() && (-PI..=PI).contains(&yaw)) {
            return Err(TrajectoryError::InvalidPlane(yaw));
        }
        Ok(Self { kind, yaw, sweep })
    }

    pub fn sagittal() -> Self {
        Self {
            kind: PlaneKind::Sagittal,
            yaw: 0.0,
            sweep: Sweep::Forward,
        }
    }

    pub fn frontal() -> Self {
        Self {
            kind: PlaneKind::Frontal,
            yaw: 0.0,
            sweep: Sweep::Forward,
        }
    }

    pub fn frame(&self) -> PlaneFrame {
        let heading = match self.kind {
            PlaneKind::Sagittal => self.yaw,
            PlaneKind::Frontal => self.yaw + FRAC_PI_2,
        };
        PlaneFrame {
            heading,
            sweep_gain: self.sweep.gain(),
        }
    }
}

/// Continuous parameters of a trajectory plane, the quantities blended
/// during gait transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFrame {
    /// Heading of the horizontal axis from `+x` toward `+z`.
    pub heading: f64,
    /// `+1` forward sweep, `-1` reverse, intermediate values while blending.
    pub sweep_gain: f64,
}

impl PlaneFrame {
    pub fn axis(&self) -> Vector3<f64> {
        let (s, c) = self.heading.sin_cos();
        Vector3::new(c, 0.0, s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitName {
    ForwardTrot,
    BackwardTrot,
    SideStep,
    Turn,
}

impl GaitName {
    pub const ALL: [GaitName; 4] = [
        GaitName::ForwardTrot,
        GaitName::BackwardTrot,
        GaitName::SideStep,
        GaitName::Turn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GaitName::ForwardTrot => "forward_trot",
            GaitName::BackwardTrot => "backward_trot",
            GaitName::SideStep => "side_step",
            GaitName::Turn => "turn",
        }
    }
}

impl fmt::Display for GaitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GaitName {
    type Err = TrajectoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GaitName::ALL
            .into_iter()
            .find(|g| g.as_str() == s || g.as_str().replace('_', "-") == s)
            .ok_or_else(|| TrajectoryError::UnknownGait(s.to_string()))
    }
}

/// Body displacement that a gait is rewarded for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardAxis {
    #[serde(rename = "+x")]
    PlusX,
    #[serde(rename = "-x")]
    MinusX,
    #[serde(rename = "+z")]
    PlusZ,
    #[serde(rename = "+yaw")]
    PlusYaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitConfig {
    pub name: GaitName,
    /// Per leg, ordered FL, FR, BL, BR.
    pub leg_planes: [GaitPlane; 4],
    pub phase_offsets: [f64; 4],
    pub reward_axis: RewardAxis,
}

impl GaitConfig {
    pub fn params(&self) -> GaitParams {
        GaitParams {
            frames: self.leg_planes.map(|p| p.frame()),
            offsets: self.phase_offsets,
        }
    }
}

/// Per-leg plane frames and phase offsets actually used to place the feet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    pub frames: [PlaneFrame; 4],
    pub offsets: [f64; 4],
}

/// Where foot splines live relative to each hip and how they are confined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootWorkspace {
    /// Depth of the polar center below the hip.
    pub center_depth: f64,
    pub radii: RadiusBounds,
    pub bbox: WorkspaceBox,
}

impl Default for FootWorkspace {
    fn default() -> Self {
        Self {
            center_depth: 0.17,
            radii: RadiusBounds::default(),
            bbox: WorkspaceBox::default(),
        }
    }
}

impl FootWorkspace {
    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(0.0, -self.center_depth, 0.0)
    }
}

/// Unclamped hip-frame point for polar coordinates `(radius, theta)`.
pub fn plane_point(
    radius: f64,
    theta: f64,
    frame: &PlaneFrame,
    center: &Vector3<f64>,
) -> Vector3<f64> {
    let (s, c) = theta.sin_cos();
    let along = frame.sweep_gain * radius * c;
    center + frame.axis() * along + Vector3::new(0.0, -radius * s, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootTarget {
    pub point: FootPoint,
    /// True when the radius or the Cartesian point had to be clamped.
    pub clamped: bool,
}

/// Foot target of one leg at the current phase.
///
/// The spline radius is clamped to the radius bounds first and the resulting
/// point to the workspace box second.
pub fn foot_target(
    traj: &FootTrajectory,
    phase: &PhaseState,
    offset: f64,
    frame: &PlaneFrame,
    workspace: &FootWorkspace,
) -> FootTarget {
    foot_target_at(traj, phase.phi + offset, frame, workspace)
}

pub fn foot_target_at(
    traj: &FootTrajectory,
    theta: f64,
    frame: &PlaneFrame,
    workspace: &FootWorkspace,
) -> FootTarget {
    let raw = traj.evaluate(theta);
    let radius = workspace.radii.clamp(raw);
    let p = plane_point(radius, theta, frame, &workspace.center());
    let clamped_p = workspace.bbox.clamp(&p);
    FootTarget {
        point: FootPoint {
            position: clamped_p,
        },
        clamped: radius != raw || clamped_p != p,
    }
}

/// Foot targets of all four legs for the given gait parameters.
pub fn leg_targets(
    traj: &FootTrajectory,
    phi: f64,
    params: &GaitParams,
    workspace: &FootWorkspace,
) -> [FootTarget; 4] {
    Leg::ALL.map(|leg| {
        let i = leg.index();
        foot_target_at(traj, phi + params.offsets[i], &params.frames[i], workspace)
    })
}
