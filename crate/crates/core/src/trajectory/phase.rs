use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use super::spline::wrap_phase;
use super::TrajectoryError;

/// Global phase clock. One gait step is the half cycle between `0` and `π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub phi: f64,
    /// Seconds per half cycle.
    pub step_duration: f64,
}

impl PhaseState {
    pub fn new(phi: f64, step_duration: f64) -> Result<Self, TrajectoryError> {
        if !(step_duration.is_finite() && step_duration > 0.0) || !phi.is_finite() {
            return Err(TrajectoryError::InvalidPhase { phi, step_duration });
        }
        Ok(Self {
            phi: wrap_phase(phi),
            step_duration,
        })
    }

    /// Phase rate in radians per second.
    pub fn rate(&self) -> f64 {
        PI / self.step_duration
    }

    /// Which half of the cycle the phase is in: `0` for `[0, π)`, `1` otherwise.
    pub fn half(&self) -> usize {
        usize::from(self.phi >= PI)
    }
}

/// Advances the clock by `dt`; the flag is set when the step reaches or
/// crosses `0` or `π`.
pub fn advance_phase(phase: &PhaseState, dt: f64) -> Result<(PhaseState, bool), TrajectoryError> {
    if !(dt > 0.0 && dt < phase.step_duration) {
        return Err(TrajectoryError::InvalidTimeStep {
            dt,
            step_duration: phase.step_duration,
        });
    }
    let start = phase.phi;
    let end = start + phase.rate() * dt;
    // Boundaries are multiples of π; `end` lies in (start, start + π).
    let next_boundary = (start / PI).floor() * PI + PI;
    let crossed = end >= next_boundary;
    let phi = if end >= TAU { end - TAU } else { end };
    Ok((
        PhaseState {
            phi: wrap_phase(phi),
            step_duration: phase.step_duration,
        },
        crossed,
    ))
}
