//! Gait transitions through a first-order low-pass filter on the plane
//! parameters, applied once per gait step.

use std::f64::consts::{PI, TAU};

use super::plane::{leg_targets, FootWorkspace, GaitConfig, GaitParams, PlaneFrame};
use super::spline::FootTrajectory;
use super::TrajectoryError;

fn angle_diff(to: f64, from: f64) -> f64 {
    let d = (to - from).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// One filter step from `state` toward `target`:
/// `x ← x + alpha · (target − x)` for every heading, sweep gain and offset.
pub fn blend_gaits(
    state: &GaitParams,
    target: &GaitConfig,
    alpha: f64,
) -> Result<GaitParams, TrajectoryError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(TrajectoryError::InvalidBlendCoefficient(alpha));
    }
    let goal = target.params();
    if alpha == 1.0 {
        return Ok(goal);
    }
    let mut out = *state;
    for i in 0..4 {
        let (cur, tgt) = (state.frames[i], goal.frames[i]);
        out.frames[i] = PlaneFrame {
            heading: cur.heading + alpha * angle_diff(tgt.heading, cur.heading),
            sweep_gain: cur.sweep_gain + alpha * (tgt.sweep_gain - cur.sweep_gain),
        };
        out.offsets[i] = state.offsets[i] + alpha * angle_diff(goal.offsets[i], state.offsets[i]);
    }
    Ok(out)
}

/// Drives the filter over a run, holding the active target.
#[derive(Debug, Clone)]
pub struct GaitBlender {
    alpha: f64,
    state: GaitParams,
    target: GaitConfig,
}

impl GaitBlender {
    pub fn new(current: &GaitConfig, alpha: f64) -> Result<Self, TrajectoryError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(TrajectoryError::InvalidBlendCoefficient(alpha));
        }
        Ok(Self {
            alpha,
            state: current.params(),
            target: current.clone(),
        })
    }

    pub fn params(&self) -> &GaitParams {
        &self.state
    }

    pub fn target(&self) -> &GaitConfig {
        &self.target
    }

    pub fn set_target(&mut self, target: &GaitConfig) {
        self.target = target.clone();
    }

    /// Advances the filter by one gait step and returns the new parameters.
    pub fn step(&mut self) -> &GaitParams {
        // alpha is validated in `new`
        self.state = blend_gaits(&self.state, &self.target, self.alpha).expect("valid alpha");
        &self.state
    }
}

/// Largest foot displacement between two parameter sets on a common
/// trajectory, over all legs and `samples` evenly spaced phases.
pub fn target_gap(
    traj: &FootTrajectory,
    a: &GaitParams,
    b: &GaitParams,
    workspace: &FootWorkspace,
    samples: usize,
) -> f64 {
    (0..samples)
        .map(|k| {
            let phi = k as f64 * TAU / samples as f64;
            let ta = leg_targets(traj, phi, a, workspace);
            let tb = leg_targets(traj, phi, b, workspace);
            ta.iter()
                .zip(&tb)
                .map(|(x, y)| (x.point.position - y.point.position).norm())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::plane::{GaitName, GaitPlane, PlaneKind, RewardAxis, Sweep};
    use crate::trajectory::{build_trajectory, ControlPointSet};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn gait(yaw: f64) -> GaitConfig {
        let plane = GaitPlane::new(PlaneKind::Sagittal, yaw, Sweep::Forward).unwrap();
        GaitConfig {
            name: GaitName::ForwardTrot,
            leg_planes: [plane; 4],
            phase_offsets: [0.0, PI, PI, 0.0],
            reward_axis: RewardAxis::PlusX,
        }
    }

    #[test]
    fn fixed_point_when_target_equals_current() {
        let g = gait(0.2);
        let mut b = GaitBlender::new(&g, 0.3).unwrap();
        for _ in 0..10 {
            assert_eq!(*b.step(), g.params());
        }
    }

    #[test]
    fn unit_alpha_jumps_in_one_step() {
        let mut b = GaitBlender::new(&gait(0.0), 1.0).unwrap();
        b.set_target(&gait(FRAC_PI_4));
        assert_eq!(*b.step(), gait(FRAC_PI_4).params());
    }

    #[test]
    fn yaw_follows_geometric_recursion() {
        let mut b = GaitBlender::new(&gait(0.0), 0.3).unwrap();
        b.set_target(&gait(FRAC_PI_4));
        for k in 1..=25 {
            let heading = b.step().frames[0].heading;
            let expected = FRAC_PI_4 * (1.0 - 0.7f64.powi(k));
            assert_abs_diff_eq!(heading, expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn gap_between_consecutive_steps_shrinks() {
        let ws = FootWorkspace::default();
        let traj =
            build_trajectory(&ControlPointSet::constant(0.04, 18).unwrap(), &ws.radii).unwrap();
        let mut b = GaitBlender::new(&gait(0.0), 0.3).unwrap();
        let mut target = gait(FRAC_PI_4);
        target.leg_planes[0].sweep = Sweep::Reverse;
        b.set_target(&target);
        let mut prev = *b.params();
        let mut last_gap = f64::INFINITY;
        for _ in 0..20 {
            let next = *b.step();
            let gap = target_gap(&traj, &prev, &next, &ws, 72);
            assert!(gap < last_gap);
            last_gap = gap;
            prev = next;
        }
        assert!(last_gap < 1e-3);
    }

    #[test]
    fn alpha_out_of_range_rejected() {
        assert!(GaitBlender::new(&gait(0.0), 0.0).is_err());
        assert!(blend_gaits(&gait(0.0).params(), &gait(0.1), 1.5).is_err());
    }
}
