//! Closed cubic Hermite splines over the phase circle.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::TrajectoryError;

pub const DEFAULT_CONTROL_POINTS: usize = 18;
pub const MIN_CONTROL_POINTS: usize = 6;
pub const MAX_CONTROL_POINTS: usize = 24;

/// Allowed interval for control-point radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for RadiusBounds {
    fn default() -> Self {
        Self {
            min: 0.02,
            max: 0.04,
        }
    }
}

impl RadiusBounds {
    pub fn new(min: f64, max: f64) -> Result<Self, TrajectoryError> {
        if !(min.is_finite() && max.is_finite() && min >= 0.0 && min < max) {
            return Err(TrajectoryError::InvalidBounds { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn clamp(&self, r: f64) -> f64 {
        r.clamp(self.min, self.max)
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.min && r <= self.max
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// Radial way-points at evenly spaced phases `2πi/n`, `i = 0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPointSet {
    radii: Vec<f64>,
}

impl ControlPointSet {
    pub fn new(radii: Vec<f64>) -> Result<Self, TrajectoryError> {
        let n = radii.len();
        if !(MIN_CONTROL_POINTS..=MAX_CONTROL_POINTS).contains(&n) {
            return Err(TrajectoryError::ControlPointCount(n));
        }
        if let Some(i) = radii.iter().position(|r| !r.is_finite()) {
            return Err(TrajectoryError::InvalidControlPoints {
                index: i,
                radius: radii[i],
            });
        }
        Ok(Self { radii })
    }

    pub fn constant(radius: f64, n: usize) -> Result<Self, TrajectoryError> {
        Self::new(vec![radius; n])
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.radii.len() as f64
    }

    pub fn phase(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub fn phases(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.phase(i)).collect()
    }
}

/// A closed C1 cubic Hermite loop through the control points.
#[derive(Debug, Clone, PartialEq)]
pub struct FootTrajectory {
    knots: ControlPointSet,
    tangents: Vec<f64>,
}

fn hermite(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        2.0 * t3 - 3.0 * t2 + 1.0,
        -2.0 * t3 + 3.0 * t2,
        t3 - 2.0 * t2 + t,
        t3 - t2,
    ]
}

fn hermite_slope(t: f64) -> [f64; 4] {
    let t2 = t * t;
    [
        6.0 * t2 - 6.0 * t,
        -6.0 * t2 + 6.0 * t,
        3.0 * t2 - 4.0 * t + 1.0,
        3.0 * t2 - 2.0 * t,
    ]
}

/// Wraps a phase into `[0, 2π)`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Builds the loop, rejecting radii outside `bounds`.
///
/// Tangents follow `w'_i = (w_{i+1} - w_{i-1}) / (α_{i+1} - α_{i-1})` with
/// cyclic indices.
pub fn build_trajectory(
    points: &ControlPointSet,
    bounds: &RadiusBounds,
) -> Result<FootTrajectory, TrajectoryError> {
    if let Some(i) = points.radii().iter().position(|&r| !bounds.contains(r)) {
        return Err(TrajectoryError::InvalidControlPoints {
            index: i,
            radius: points.radii()[i],
        });
    }
    let n = points.len();
    let w = points.radii();
    let span = 2.0 * points.spacing();
    let tangents = (0..n)
        .map(|i| (w[(i + 1) % n] - w[(i + n - 1) % n]) / span)
        .collect();
    Ok(FootTrajectory {
        knots: points.clone(),
        tangents,
    })
}

impl FootTrajectory {
    pub fn knots(&self) -> &ControlPointSet {
        &self.knots
    }

    pub fn tangents(&self) -> &[f64] {
        &self.tangents
    }

    fn locate(&self, phi: f64) -> (usize, usize, f64) {
        let n = self.knots.len();
        let s = wrap_phase(phi) * n as f64 / TAU;
        let i = (s.floor() as usize).min(n - 1);
        (i, (i + 1) % n, s - i as f64)
    }

    /// Radius at phase `phi` (wrapped internally).
    pub fn evaluate(&self, phi: f64) -> f64 {
        let (i, j, t) = self.locate(phi);
        let w = self.knots.radii();
        let d = self.knots.spacing();
        let h = hermite(t);
        h[0] * w[i] + h[1] * w[j] + d * (h[2] * self.tangents[i] + h[3] * self.tangents[j])
    }

    /// Radius slope `dw/dφ` at phase `phi`.
    pub fn derivative(&self, phi: f64) -> f64 {
        let (i, j, t) = self.locate(phi);
        let w = self.knots.radii();
        let d = self.knots.spacing();
        let h = hermite_slope(t);
        (h[0] * w[i] + h[1] * w[j]) / d + h[2] * self.tangents[i] + h[3] * self.tangents[j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bounds() -> RadiusBounds {
        RadiusBounds::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn constant_loop_is_constant() {
        let pts = ControlPointSet::constant(0.05, 18).unwrap();
        let traj = build_trajectory(&pts, &bounds()).unwrap();
        assert!(traj.tangents().iter().all(|&t| t == 0.0));
        for k in 0..100 {
            assert_abs_diff_eq!(traj.evaluate(k as f64 * 0.0731), 0.05, epsilon = 1e-15);
        }
    }

    #[test]
    fn cosine_samples_are_interpolated() {
        let n = 18;
        let radii = (0..n)
            .map(|i| 0.3 + 0.1 * (i as f64 * TAU / n as f64).cos())
            .collect();
        let pts = ControlPointSet::new(radii).unwrap();
        let traj = build_trajectory(&pts, &bounds()).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(traj.evaluate(pts.phase(i)), pts.radii()[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn mid_segment_value_matches_hand_evaluated_basis() {
        // w_0 = 0.1, w_1 = 0.2; neighbours chosen so the cyclic tangents are known.
        let mut radii = vec![0.15; 18];
        radii[0] = 0.1;
        radii[1] = 0.2;
        radii[2] = 0.3;
        radii[17] = 0.05;
        let pts = ControlPointSet::new(radii).unwrap();
        let traj = build_trajectory(&pts, &bounds()).unwrap();
        let d = TAU / 18.0;
        let t0 = (0.2 - 0.05) / (2.0 * d);
        let t1 = (0.3 - 0.1) / (2.0 * d);
        let expected = 0.5 * 0.1 + 0.5 * 0.2 + 0.125 * t0 * d - 0.125 * t1 * d;
        assert_abs_diff_eq!(traj.evaluate(0.5 * d), expected, epsilon = 1e-15);
        // Hand-simplified: 0.15 + 0.125 * (0.15 - 0.2) / 2 = 0.146875
        assert_abs_diff_eq!(traj.evaluate(0.5 * d), 0.146875, epsilon = 1e-15);
    }

    #[test]
    fn out_of_bounds_radius_rejected() {
        let mut radii = vec![0.05; 18];
        radii[7] = 0.3;
        let pts = ControlPointSet::new(radii).unwrap();
        let err = build_trajectory(&pts, &RadiusBounds::new(0.02, 0.07).unwrap()).unwrap_err();
        assert!(matches!(
            err,
            TrajectoryError::InvalidControlPoints { index: 7, .. }
        ));
    }

    #[test]
    fn control_point_count_is_checked() {
        assert!(ControlPointSet::constant(0.1, 5).is_err());
        assert!(ControlPointSet::constant(0.1, 25).is_err());
        assert!(ControlPointSet::constant(0.1, 6).is_ok());
        assert!(ControlPointSet::new(vec![f64::NAN; 18]).is_err());
    }

    #[test]
    fn wrap_phase_stays_in_range() {
        for phi in [-1e-20, -TAU, TAU, 3.0 * TAU + 0.1, -0.5] {
            let w = wrap_phase(phi);
            assert!((0.0..TAU).contains(&w), "{phi} -> {w}");
        }
    }
}
