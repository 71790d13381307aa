//! Floating-base dynamics with massless legs, reflected joint inertia and
//! penalty ground contact.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::kinematics::{
    foot_jacobian, forward_kinematics, JointLimits, Leg, LegAngles, LegGeometry, Side, STATE_DIM,
};
use crate::trajectory::PhaseState;

pub const GRAVITY: f64 = 9.81;
/// Largest substep the integrator accepts, in seconds.
pub const MAX_SUBSTEP: f64 = 0.002;

/// Rigid torso, four identical legs and the joint servo model.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub mass: f64,
    /// Body-frame inertia about the center of mass.
    pub inertia: Matrix3<f64>,
    pub legs: [LegGeometry; 4],
    pub limits: JointLimits,
    pub kp: f64,
    pub kd: f64,
    pub torque_cap: f64,
    /// Rotor inertia reflected through the gearbox, per joint.
    pub joint_inertia: f64,
    /// Torso height above the ground when standing with feet at mid radius.
    pub nominal_height: f64,
    pub gravity: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        let leg = |x: f64, z: f64, side| {
            LegGeometry::new(0.12, 0.145, Vector3::new(x, 0.0, z), 0.0, side)
                .expect("default geometry is valid")
        };
        Self {
            mass: 4.0,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.0155, 0.0667, 0.0555)),
            legs: [
                leg(0.15, -0.1, Side::Left),
                leg(0.15, 0.1, Side::Right),
                leg(-0.15, -0.1, Side::Left),
                leg(-0.15, 0.1, Side::Right),
            ],
            limits: JointLimits::default(),
            kp: 30.0,
            kd: 0.5,
            torque_cap: 4.0,
            joint_inertia: 0.01,
            nominal_height: 0.20,
            gravity: GRAVITY,
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |what: &str| {
            Err(EnvError::InvalidConfig(format!(
                "robot {what} must be positive"
            )))
        };
        if !(self.mass > 0.0) {
            return bad("mass");
        }
        if (0..3).any(|i| !(self.inertia[(i, i)] > 0.0))
            || self.inertia.iter().any(|v| !v.is_finite())
        {
            return bad("inertia diagonal");
        }
        if !(self.kp > 0.0 && self.kd > 0.0) {
            return bad("PD gains");
        }
        if !(self.torque_cap > 0.0) {
            return bad("torque cap");
        }
        if !(self.joint_inertia > 0.0) {
            return bad("joint inertia");
        }
        if !(self.nominal_height > 0.0) {
            return bad("nominal height");
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return Err(EnvError::InvalidConfig(
                "gravity must be non-negative".into(),
            ));
        }
        if !self.limits.is_valid() {
            return Err(EnvError::InvalidConfig(
                "joint limits must satisfy min < max".into(),
            ));
        }
        for leg in &self.legs {
            leg.validate()
                .map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }
}

/// Spring-damper ground with a Coulomb-capped tangential stick spring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactParams {
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
    pub ground_height: f64,
    pub tangential_stiffness: f64,
    pub tangential_damping: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: 1e4,
            damping: 200.0,
            friction: 0.8,
            ground_height: 0.0,
            tangential_stiffness: 5000.0,
            tangential_damping: 100.0,
        }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        let values = [
            self.stiffness,
            self.damping,
            self.friction,
            self.tangential_stiffness,
            self.tangential_damping,
        ];
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !self.ground_height.is_finite() {
            return Err(EnvError::InvalidConfig(
                "contact parameters must be finite and non-negative".into(),
            ));
        }
        if self.friction > 1.5 {
            return Err(EnvError::InvalidConfig(format!(
                "friction {} exceeds 1.5",
                self.friction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub linear_velocity: Vector3<f64>,
    /// World-frame angular velocity.
    pub angular_velocity: Vector3<f64>,
    pub joint_angles: [f64; STATE_DIM],
    pub joint_velocities: [f64; STATE_DIM],
    pub phase: PhaseState,
    /// Energy spent since the last gait-step boundary.
    pub energy: f64,
    /// Tangential stick points of feet currently in contact.
    pub anchors: [Option<Vector3<f64>>; 4],
}

impl WorldState {
    pub fn at_rest(
        position: Vector3<f64>,
        joint_angles: [f64; STATE_DIM],
        phase: PhaseState,
    ) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::identity(),
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            joint_angles,
            joint_velocities: [0.0; STATE_DIM],
            phase,
            energy: 0.0,
            anchors: [None; 4],
        }
    }

    pub fn leg_angles(&self, leg: Leg) -> LegAngles {
        let i = 3 * leg.index();
        LegAngles::from_slice(&self.joint_angles[i..i + 3])
    }

    pub fn leg_velocities(&self, leg: Leg) -> Vector3<f64> {
        let i = 3 * leg.index();
        Vector3::from_column_slice(&self.joint_velocities[i..i + 3])
    }

    /// World position of a foot.
    pub fn foot_position(&self, model: &RobotModel, leg: Leg) -> Vector3<f64> {
        let geom = &model.legs[leg.index()];
        let local = geom.hip_offset + forward_kinematics(geom, &self.leg_angles(leg)).position;
        self.position + self.orientation * local
    }

    /// `(roll, pitch, yaw)`; yaw is counter-clockwise seen from above.
    pub fn euler(&self) -> (f64, f64, f64) {
        let fwd = self.orientation * Vector3::x();
        let up = self.orientation * Vector3::y();
        let right = self.orientation * Vector3::z();
        let yaw = (-fwd.z).atan2(fwd.x);
        let pitch = fwd.y.clamp(-1.0, 1.0).asin();
        let roll = (-right.y).atan2(up.y);
        (roll, pitch, yaw)
    }

    pub fn height(&self) -> f64 {
        self.position.y
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.linear_velocity.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.joint_angles.iter().all(|v| v.is_finite())
            && self.joint_velocities.iter().all(|v| v.is_finite())
            && self.energy.is_finite()
    }

    /// Translational plus rotational kinetic energy and gravitational
    /// potential energy of the torso.
    pub fn base_energy(&self, model: &RobotModel, ground_height: f64) -> f64 {
        let r = self.orientation.to_rotation_matrix();
        let inertia_world = r * model.inertia * r.transpose();
        0.5 * model.mass * self.linear_velocity.norm_squared()
            + 0.5
                * self
                    .angular_velocity
                    .dot(&(inertia_world * self.angular_velocity))
            + model.mass * model.gravity * (self.position.y - ground_height)
    }
}

/// Forces produced during one substep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstepForces {
    /// Ground reaction on each foot, world frame.
    pub contact: [Vector3<f64>; 4],
}

impl SubstepForces {
    pub fn total(&self) -> Vector3<f64> {
        self.contact.iter().sum()
    }
}

fn contact_force(
    params: &ContactParams,
    foot: &Vector3<f64>,
    velocity: &Vector3<f64>,
    anchor: &mut Option<Vector3<f64>>,
) -> Vector3<f64> {
    let depth = params.ground_height - foot.y;
    if depth <= 0.0 {
        *anchor = None;
        return Vector3::zeros();
    }
    let normal = (params.stiffness * depth - params.damping * velocity.y).max(0.0);
    if normal == 0.0 {
        *anchor = None;
        return Vector3::zeros();
    }
    let stick = anchor.get_or_insert(Vector3::new(foot.x, params.ground_height, foot.z));
    let slip = Vector3::new(foot.x - stick.x, 0.0, foot.z - stick.z);
    let spring = -params.tangential_stiffness * slip;
    let mut tangential =
        spring - params.tangential_damping * Vector3::new(velocity.x, 0.0, velocity.z);
    let cap = params.friction * normal;
    let magnitude = tangential.norm();
    if magnitude > cap {
        tangential *= cap / magnitude;
        // Slide the anchor so the spring alone carries the capped force.
        if params.tangential_stiffness > 0.0 {
            let offset = tangential / params.tangential_stiffness;
            stick.x = foot.x + offset.x;
            stick.z = foot.z + offset.z;
        }
    }
    Vector3::new(tangential.x, normal, tangential.z)
}

/// Advances the world by `dt` under motor torques `torques`.
///
/// Base translation is integrated exactly under gravity and with
/// semi-implicit Euler for contact forces; rotation propagates world angular
/// momentum and maps the resulting angular velocity onto the orientation.
/// Joints are second-order systems driven by motor torque and the ground
/// reaction transmitted through the massless legs.
pub fn physics_substep(
    model: &RobotModel,
    contact: &ContactParams,
    world: &WorldState,
    torques: &[f64; STATE_DIM],
    dt: f64,
) -> Result<(WorldState, SubstepForces), EnvError> {
    if !(dt > 0.0 && dt <= MAX_SUBSTEP) {
        return Err(EnvError::InvalidConfig(format!(
            "substep {dt} outside (0, {MAX_SUBSTEP}]"
        )));
    }
    let mut next = world.clone();
    let rot = world.orientation.to_rotation_matrix();
    let mut forces = [Vector3::zeros(); 4];
    let mut force_sum = Vector3::zeros();
    let mut torque_sum = Vector3::zeros();

    for leg in Leg::ALL {
        let i = leg.index();
        let geom = &model.legs[i];
        let angles = world.leg_angles(leg);
        let jac = foot_jacobian(geom, &angles);
        let local = geom.hip_offset + forward_kinematics(geom, &angles).position;
        let arm = rot * local;
        let foot = world.position + arm;
        let foot_velocity = world.linear_velocity
            + world.angular_velocity.cross(&arm)
            + rot * (jac * world.leg_velocities(leg));
        let f = contact_force(contact, &foot, &foot_velocity, &mut next.anchors[i]);
        forces[i] = f;
        force_sum += f;
        torque_sum += arm.cross(&f);

        // Ground reaction expressed as joint torques.
        let reaction = jac.transpose() * (rot.transpose() * f);
        for j in 0..3 {
            let k = 3 * i + j;
            let accel = (torques[k] + reaction[j]) / model.joint_inertia;
            let mut qd = world.joint_velocities[k] + accel * dt;
            let mut q = world.joint_angles[k] + qd * dt;
            let [lo, hi] = match j {
                0 => model.limits.abduction,
                1 => model.limits.hip,
                _ => model.limits.knee,
            };
            if q < lo || q > hi {
                q = q.clamp(lo, hi);
                qd = 0.0;
            }
            next.joint_velocities[k] = qd;
            next.joint_angles[k] = q;
        }
    }

    let gravity = Vector3::new(0.0, -model.gravity, 0.0);
    next.linear_velocity = world.linear_velocity + (force_sum / model.mass + gravity) * dt;
    next.position = world.position + next.linear_velocity * dt - 0.5 * gravity * dt * dt;

    let inertia_world = rot * model.inertia * rot.transpose();
    let momentum = inertia_world * world.angular_velocity + torque_sum * dt;
    next.angular_velocity = inertia_world
        .try_inverse()
        .ok_or_else(|| EnvError::InvalidConfig("torso inertia is singular".into()))?
        * momentum;
    let spin = UnitQuaternion::from_scaled_axis(next.angular_velocity * dt);
    next.orientation = UnitQuaternion::new_normalize((spin * world.orientation).into_inner());

    if !next.is_finite() {
        return Err(EnvError::EpisodeDiverged(format!(
            "non-finite state at phase {:.4}",
            world.phase.phi
        )));
    }
    Ok((next, SubstepForces { contact: forces }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn airborne(model: &RobotModel) -> WorldState {
        let legs = LegAngles::new(0.0, -0.5, 1.0);
        let q = crate::kinematics::JointState::from_legs(&[legs; 4]);
        let mut w = WorldState::at_rest(
            Vector3::new(0.0, 5.0, 0.0),
            q.as_slice().try_into().unwrap(),
            PhaseState::new(0.0, 0.2).unwrap(),
        );
        let _ = model;
        w.linear_velocity = Vector3::new(1.5, 2.0, -0.5);
        w
    }

    #[test]
    fn free_fall_matches_projectile() {
        let model = RobotModel::default();
        let contact = ContactParams::default();
        let start = airborne(&model);
        let mut w = start.clone();
        let dt = 0.001;
        for _ in 0..100 {
            w = physics_substep(&model, &contact, &w, &[0.0; 12], dt)
                .unwrap()
                .0;
        }
        let t = 0.1;
        let g = Vector3::new(0.0, -GRAVITY, 0.0);
        let expected = start.position + start.linear_velocity * t + 0.5 * g * t * t;
        assert_abs_diff_eq!(w.position, expected, epsilon = 1e-6);
        assert_abs_diff_eq!(
            w.linear_velocity,
            start.linear_velocity + g * t,
            epsilon = 1e-9
        );
    }

    #[test]
    fn torque_free_spin_conserves_energy() {
        let model = RobotModel::default();
        let contact = ContactParams::default();
        let mut w = airborne(&model);
        w.angular_velocity = Vector3::new(0.8, -1.2, 2.0);
        let e0 = w.base_energy(&model, 0.0);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            w = physics_substep(&model, &contact, &w, &[0.0; 12], 0.001)
                .unwrap()
                .0;
            worst = worst.max((w.base_energy(&model, 0.0) - e0).abs() / e0);
            assert!((w.orientation.norm() - 1.0).abs() < 1e-9);
        }
        assert!(worst < 1e-3, "relative drift {worst}");
    }

    #[test]
    fn penetration_pushes_up_and_separation_releases() {
        let p = ContactParams::default();
        let mut anchor = None;
        let f = contact_force(
            &p,
            &Vector3::new(0.0, -0.001, 0.0),
            &Vector3::zeros(),
            &mut anchor,
        );
        assert_abs_diff_eq!(f.y, 10.0, epsilon = 1e-12);
        assert!(anchor.is_some());
        let f = contact_force(
            &p,
            &Vector3::new(0.0, 0.001, 0.0),
            &Vector3::zeros(),
            &mut anchor,
        );
        assert_eq!(f, Vector3::zeros());
        assert!(anchor.is_none());
    }

    #[test]
    fn friction_is_capped() {
        let p = ContactParams::default();
        let mut anchor = Some(Vector3::new(-1.0, 0.0, 0.0));
        let f = contact_force(
            &p,
            &Vector3::new(0.0, -0.001, 0.0),
            &Vector3::zeros(),
            &mut anchor,
        );
        let tangential = (f.x * f.x + f.z * f.z).sqrt();
        assert_abs_diff_eq!(tangential, 0.8 * f.y, epsilon = 1e-12);
        // The anchor followed the foot.
        assert!(anchor.unwrap().x > -0.01);
    }

    #[test]
    fn oversized_step_rejected() {
        let model = RobotModel::default();
        let w = airborne(&model);
        assert!(physics_substep(&model, &ContactParams::default(), &w, &[0.0; 12], 0.01).is_err());
    }

    #[test]
    fn euler_angles_of_pure_yaw() {
        let mut w = airborne(&RobotModel::default());
        w.orientation = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 0.3);
        let (roll, pitch, yaw) = w.euler();
        assert_abs_diff_eq!(roll, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pitch, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(yaw, 0.3, epsilon = 1e-12);
    }
}
