//! Foot trajectories: closed splines through radial control points, the
//! planes they are drawn on, the phase clock and gait blending.

mod blend;
mod phase;
mod plane;
mod spline;

use std::f64::consts::TAU;
use std::io::Write;

use thiserror::Error;

pub use blend::{blend_gaits, target_gap, GaitBlender};
pub use phase::{advance_phase, PhaseState};
pub use plane::{
    foot_target, foot_target_at, leg_targets, plane_point, FootTarget, FootWorkspace, GaitConfig,
    GaitName, GaitParams, GaitPlane, PlaneFrame, PlaneKind, RewardAxis, Sweep,
};
pub use spline::{
    build_trajectory, wrap_phase, ControlPointSet, FootTrajectory, RadiusBounds,
    DEFAULT_CONTROL_POINTS, MAX_CONTROL_POINTS, MIN_CONTROL_POINTS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("control point {index} has radius {radius} outside the allowed bounds")]
    InvalidControlPoints { index: usize, radius: f64 },
    #[error(
        "expected between {MIN_CONTROL_POINTS} and {MAX_CONTROL_POINTS} control points, got {0}"
    )]
    ControlPointCount(usize),
    #[error("invalid radius bounds [{min}, {max}]")]
    InvalidBounds { min: f64, max: f64 },
    #[error("plane yaw {0} outside [-pi, pi]")]
    InvalidPlane(f64),
    #[error("invalid phase state (phi {phi}, step duration {step_duration})")]
    InvalidPhase { phi: f64, step_duration: f64 },
    #[error("time step {dt} must lie in (0, {step_duration})")]
    InvalidTimeStep { dt: f64, step_duration: f64 },
    #[error("blend coefficient {0} must lie in (0, 1]")]
    InvalidBlendCoefficient(f64),
    #[error("unknown gait '{0}'")]
    UnknownGait(String),
}

/// Writes one leg's trajectory as CSV rows
/// `phase_rad, radius_m, x_m, y_m, z_m` at `resolution` evenly spaced phases.
///
/// `phase_rad` is the global phase; the leg's offset is applied before
/// evaluating the spline. Coordinates are the clamped hip-frame target.
pub fn write_trajectory_csv<W: Write>(
    out: W,
    traj: &FootTrajectory,
    frame: &PlaneFrame,
    offset: f64,
    workspace: &FootWorkspace,
    resolution: usize,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["phase_rad", "radius_m", "x_m", "y_m", "z_m"])?;
    for k in 0..resolution {
        let phi = k as f64 * TAU / resolution as f64;
        let theta = phi + offset;
        let radius = workspace.radii.clamp(traj.evaluate(theta));
        let p = foot_target_at(traj, theta, frame, workspace).point.position;
        w.serialize((phi, radius, p.x, p.y, p.z))?;
    }
    w.flush()?;
    Ok(())
}
