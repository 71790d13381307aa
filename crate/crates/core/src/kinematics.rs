//! Leg kinematics for the three-joint leg: an abduction joint carrying a
//! planar five-bar mechanism, solved as its equivalent serial 2R chain.
//!
//! Frames: every leg uses its own hip frame with axes aligned to the body,
//! `x` forward, `y` up and `z` toward the robot's right. Hip and knee angles
//! are measured in the leg plane from the downward vertical, positive toward
//! the front. Abduction is positive *outward* on both sides, so a left/right
//! symmetric pose produces identical joint angles on mirrored legs.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Clearance kept from the fully extended and fully folded configurations.
pub const SINGULARITY_MARGIN: f64 = 1e-4;

/// Number of joints per leg.
pub const JOINTS_PER_LEG: usize = 3;
/// Number of motor angles in a [`JointState`].
pub const STATE_DIM: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("target ({x:.4}, {y:.4}, {z:.4}) is outside the reachable workspace")]
    Unreachable { x: f64, y: f64, z: f64 },
    #[error("invalid leg geometry: {0}")]
    InvalidGeometry(String),
    #[error("joint state must have {STATE_DIM} finite entries, got {0}")]
    InvalidJointState(String),
}

/// The four legs, in the fixed order used by every 12-vector in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Leg {
    FrontLeft,
    FrontRight,
    BackLeft,
    BackRight,
}

impl Leg {
    pub const ALL: [Leg; 4] = [
        Leg::FrontLeft,
        Leg::FrontRight,
        Leg::BackLeft,
        Leg::BackRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn side(self) -> Side {
        match self {
            Leg::FrontLeft | Leg::BackLeft => Side::Left,
            Leg::FrontRight | Leg::BackRight => Side::Right,
        }
    }

    pub fn is_front(self) -> bool {
        matches!(self, Leg::FrontLeft | Leg::FrontRight)
    }

    /// The leg on the other side of the body at the same end.
    pub fn mirror(self) -> Leg {
        match self {
            Leg::FrontLeft => Leg::FrontRight,
            Leg::FrontRight => Leg::FrontLeft,
            Leg::BackLeft => Leg::BackRight,
            Leg::BackRight => Leg::BackLeft,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Leg::FrontLeft => "FL",
            Leg::FrontRight => "FR",
            Leg::BackLeft => "BL",
            Leg::BackRight => "BR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Sign of the body `z` axis pointing away from the body on this side.
    pub fn outward(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// Which of the two planar 2R solutions to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KneeBranch {
    /// Knee joint behind the hip-foot line (positive knee angle).
    #[default]
    Backward,
    /// Knee joint in front of the hip-foot line (negative knee angle).
    Forward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegGeometry {
    pub upper_link_length: f64,
    pub lower_link_length: f64,
    /// Hip origin in the body frame.
    pub hip_offset: Vector3<f64>,
    /// Outward distance from the abduction axis to the leg plane.
    pub abduction_axis_offset: f64,
    pub side: Side,
}

impl LegGeometry {
    pub fn new(
        upper_link_length: f64,
        lower_link_length: f64,
        hip_offset: Vector3<f64>,
        abduction_axis_offset: f64,
        side: Side,
    ) -> Result<Self, KinematicsError> {
        let geom = Self {
            upper_link_length,
            lower_link_length,
            hip_offset,
            abduction_axis_offset,
            side,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let lengths = [self.upper_link_length, self.lower_link_length];
        if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(KinematicsError::InvalidGeometry(
                "link lengths must be finite and strictly positive".into(),
            ));
        }
        if !(self.abduction_axis_offset.is_finite() && self.abduction_axis_offset >= 0.0) {
            return Err(KinematicsError::InvalidGeometry(
                "abduction axis offset must be finite and non-negative".into(),
            ));
        }
        if self.hip_offset.iter().any(|v| !v.is_finite()) {
            return Err(KinematicsError::InvalidGeometry(
                "hip offset must be finite".into(),
            ));
        }
        let (lo, hi) = self.reachable_radius();
        if lo >= hi {
            return Err(KinematicsError::InvalidGeometry(
                "links too similar in length: reachable annulus is empty".into(),
            ));
        }
        Ok(())
    }

    /// Radius range of the planar chain, `[|upper - lower|, upper + lower]`.
    pub fn annulus(&self) -> (f64, f64) {
        (
            (self.upper_link_length - self.lower_link_length).abs(),
            self.upper_link_length + self.lower_link_length,
        )
    }

    /// The annulus shrunk by [`SINGULARITY_MARGIN`] on both sides.
    pub fn reachable_radius(&self) -> (f64, f64) {
        let (lo, hi) = self.annulus();
        (lo + SINGULARITY_MARGIN, hi - SINGULARITY_MARGIN)
    }

    /// Distance of `point` from the hip pivot measured inside the leg plane.
    ///
    /// Returns `None` when the point lies closer to the abduction axis than
    /// the abduction offset, where no abduction angle reaches it.
    pub fn planar_radius(&self, point: &FootPoint) -> Option<f64> {
        let p = point.position;
        let lateral_sq = p.y * p.y + p.z * p.z;
        let off = self.abduction_axis_offset;
        let planar_vertical_sq = lateral_sq - off * off;
        if planar_vertical_sq < 0.0 {
            return None;
        }
        Some((p.x * p.x + planar_vertical_sq).sqrt())
    }
}

/// Lower/upper joint limits for one leg, shared by all four legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub abduction: [f64; 2],
    pub hip: [f64; 2],
    pub knee: [f64; 2],
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            abduction: [-0.6, 0.6],
            hip: [-2.6, 1.6],
            knee: [0.0, 2.9],
        }
    }
}

impl JointLimits {
    pub fn contains(&self, angles: &LegAngles) -> bool {
        let within = |v: f64, [lo, hi]: [f64; 2]| v >= lo && v <= hi;
        within(angles.abduction, self.abduction)
            && within(angles.hip, self.hip)
            && within(angles.knee, self.knee)
    }

    pub fn clamp(&self, angles: &LegAngles) -> LegAngles {
        LegAngles {
            abduction: angles.abduction.clamp(self.abduction[0], self.abduction[1]),
            hip: angles.hip.clamp(self.hip[0], self.hip[1]),
            knee: angles.knee.clamp(self.knee[0], self.knee[1]),
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.abduction, self.hip, self.knee]
            .iter()
            .all(|[lo, hi]| lo.is_finite() && hi.is_finite() && lo < hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LegAngles {
    pub abduction: f64,
    pub hip: f64,
    pub knee: f64,
}

impl LegAngles {
    pub fn new(abduction: f64, hip: f64, knee: f64) -> Self {
        Self {
            abduction,
            hip,
            knee,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.abduction, self.hip, self.knee]
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self::new(values[0], values[1], values[2])
    }

    pub fn branch(&self) -> KneeBranch {
        if self.knee >= 0.0 {
            KneeBranch::Backward
        } else {
            KneeBranch::Forward
        }
    }
}

/// Foot position in a leg's hip frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootPoint {
    pub position: Vector3<f64>,
}

impl FootPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            position: Vector3::new(x, y, z),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
    }
}

/// The twelve motor angles ordered `[FL, FR, BL, BR] x [abduction, hip, knee]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    angles: [f64; STATE_DIM],
}

impl JointState {
    pub fn new(angles: [f64; STATE_DIM]) -> Result<Self, KinematicsError> {
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(KinematicsError::InvalidJointState(
                "non-finite angle".into(),
            ));
        }
        Ok(Self { angles })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, KinematicsError> {
        let angles: [f64; STATE_DIM] = values
            .try_into()
            .map_err(|_| KinematicsError::InvalidJointState(format!("{} entries", values.len())))?;
        Self::new(angles)
    }

    pub fn zeros() -> Self {
        Self {
            angles: [0.0; STATE_DIM],
        }
    }

    pub fn from_legs(legs: &[LegAngles; 4]) -> Self {
        let mut angles = [0.0; STATE_DIM];
        for (chunk, leg) in angles.chunks_exact_mut(JOINTS_PER_LEG).zip(legs) {
            chunk.copy_from_slice(&leg.as_array());
        }
        Self { angles }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.angles
    }

    pub fn leg(&self, leg: Leg) -> LegAngles {
        let i = leg.index() * JOINTS_PER_LEG;
        LegAngles::from_slice(&self.angles[i..i + JOINTS_PER_LEG])
    }

    pub fn within(&self, limits: &JointLimits) -> bool {
        Leg::ALL.iter().all(|&l| limits.contains(&self.leg(l)))
    }

    /// The same angles with left and right legs exchanged.
    pub fn mirrored(&self) -> Self {
        let mut out = [0.0; STATE_DIM];
        for leg in Leg::ALL {
            let src = leg.mirror().index() * JOINTS_PER_LEG;
            let dst = leg.index() * JOINTS_PER_LEG;
            out[dst..dst + JOINTS_PER_LEG].copy_from_slice(&self.angles[src..src + JOINTS_PER_LEG]);
        }
        Self { angles: out }
    }
}

/// Axis-aligned box in the hip frame confining foot targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for WorkspaceBox {
    fn default() -> Self {
        Self {
            min: [-0.08, -0.24, -0.06],
            max: [0.08, -0.09, 0.06],
        }
    }
}

impl WorkspaceBox {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn clamp(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|i, _| p[i].clamp(self.min[i], self.max[i]))
    }

    pub fn corners(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        (0..8).map(move |mask| {
            Vector3::from_fn(|i, _| {
                if mask & (1 << i) == 0 {
                    self.min[i]
                } else {
                    self.max[i]
                }
            })
        })
    }

    /// Checks that every point of the box is reachable by `geom`.
    ///
    /// The planar radius is convex in the position, so its maximum sits at a
    /// corner; the minimum is attained at the box point closest to the
    /// abduction axis and the hip pivot respectively.
    pub fn fits_within(&self, geom: &LegGeometry) -> bool {
        if (0..3).any(|i| !(self.min[i] < self.max[i])) {
            return false;
        }
        let (lo, hi) = geom.reachable_radius();
        let outer_ok = self.corners().all(|c| {
            geom.planar_radius(&FootPoint { position: c })
                .is_some_and(|r| r <= hi)
        });
        let nearest = self.clamp(&Vector3::zeros());
        let off = geom.abduction_axis_offset;
        let lateral_sq = nearest.y * nearest.y + nearest.z * nearest.z;
        let inner_ok = lateral_sq >= off * off
            && (nearest.x * nearest.x + lateral_sq - off * off).sqrt() >= lo;
        outer_ok && inner_ok
    }
}

/// Planar 2R position for hip/knee angles measured from the downward vertical.
fn planar_fk(geom: &LegGeometry, hip: f64, knee: f64) -> (f64, f64) {
    let (l1, l2) = (geom.upper_link_length, geom.lower_link_length);
    let px = l1 * hip.sin() + l2 * (hip + knee).sin();
    let py = -l1 * hip.cos() - l2 * (hip + knee).cos();
    (px, py)
}

pub fn forward_kinematics(geom: &LegGeometry, angles: &LegAngles) -> FootPoint {
    let (px, py) = planar_fk(geom, angles.hip, angles.knee);
    let off = geom.abduction_axis_offset;
    let (s, c) = angles.abduction.sin_cos();
    // Rotation about the forward axis; positive abduction swings the foot outward.
    let y = py * c + off * s;
    let outward = -py * s + off * c;
    FootPoint::new(px, y, geom.side.outward() * outward)
}

/// Jacobian of the hip-frame foot position with respect to
/// `(abduction, hip, knee)`.
pub fn foot_jacobian(geom: &LegGeometry, angles: &LegAngles) -> Matrix3<f64> {
    let (l1, l2) = (geom.upper_link_length, geom.lower_link_length);
    let (h, k) = (angles.hip, angles.knee);
    let (py_dh, py_dk) = (l1 * h.sin() + l2 * (h + k).sin(), l2 * (h + k).sin());
    let (px_dh, px_dk) = (l1 * h.cos() + l2 * (h + k).cos(), l2 * (h + k).cos());
    let (_, py) = planar_fk(geom, h, k);
    let off = geom.abduction_axis_offset;
    let (s, c) = angles.abduction.sin_cos();
    let sign = geom.side.outward();
    Matrix3::new(
        0.0,
        px_dh,
        px_dk,
        -py * s + off * c,
        py_dh * c,
        py_dk * c,
        sign * (-py * c - off * s),
        sign * (-py_dh * s),
        sign * (-py_dk * s),
    )
}

fn wrap_angle(a: f64) -> f64 {
    let wrapped =
        (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if wrapped <= -std::f64::consts::PI {
        wrapped + std::f64::consts::TAU
    } else {
        wrapped
    }
}

/// Solves for joint angles placing the foot at `target`.
///
/// Abduction is resolved first by rotating the target into the leg plane,
/// then the planar chain is solved on the requested knee branch.
pub fn inverse_kinematics(
    geom: &LegGeometry,
    limits: &JointLimits,
    target: &FootPoint,
    branch: KneeBranch,
) -> Result<LegAngles, KinematicsError> {
    let p = target.position;
    let unreachable = || KinematicsError::Unreachable {
        x: p.x,
        y: p.y,
        z: p.z,
    };
    if !target.is_finite() {
        return Err(unreachable());
    }
    let (lo, hi) = geom.reachable_radius();
    let radius = geom.planar_radius(target).ok_or_else(unreachable)?;
    if radius < lo || radius > hi {
        return Err(unreachable());
    }

    let off = geom.abduction_axis_offset;
    let outward = geom.side.outward() * p.z;
    let py = -(p.y * p.y + outward * outward - off * off).max(0.0).sqrt();
    let abduction = wrap_angle(off.atan2(py) - outward.atan2(p.y));

    let (l1, l2) = (geom.upper_link_length, geom.lower_link_length);
    let cos_knee = ((radius * radius - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let knee = match branch {
        KneeBranch::Backward => cos_knee.acos(),
        KneeBranch::Forward => -cos_knee.acos(),
    };
    let hip = wrap_angle(p.x.atan2(-py) - (l2 * knee.sin()).atan2(l1 + l2 * knee.cos()));

    let angles = LegAngles {
        abduction,
        hip,
        knee,
    };
    if !limits.contains(&angles) {
        return Err(unreachable());
    }
    Ok(angles)
}

/// True iff `point` is reachable and inside the bounding box.
pub fn workspace_contains(geom: &LegGeometry, bbox: &WorkspaceBox, point: &FootPoint) -> bool {
    if !point.is_finite() || !bbox.contains(&point.position) {
        return false;
    }
    let (lo, hi) = geom.reachable_radius();
    geom.planar_radius(point)
        .is_some_and(|r| r >= lo && r <= hi)
}
