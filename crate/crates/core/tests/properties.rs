//! Randomized invariants across the public API.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use proptest::collection::vec;
use proptest::prelude::*;

use gaitforge::ars::{select_top, update};
use gaitforge::env::RobotModel;
use gaitforge::gaits::gait_config;
use gaitforge::kinematics::{
    forward_kinematics, inverse_kinematics, workspace_contains, JointState, LegAngles, STATE_DIM,
};
use gaitforge::policy::{
    act, act_corrected, fit_sim2real, weighted_residual, PolicyMatrix, Sim2RealMap, StateTracePair,
};
use gaitforge::trajectory::{
    blend_gaits, build_trajectory, leg_targets, wrap_phase, ControlPointSet, FootWorkspace,
    GaitName, RadiusBounds,
};

fn radii() -> impl Strategy<Value = Vec<f64>> {
    let b = RadiusBounds::default();
    vec(b.min..=b.max, 6..=24)
}

fn state() -> impl Strategy<Value = Vec<f64>> {
    vec(-1.5..1.5f64, STATE_DIM)
}

fn gait() -> impl Strategy<Value = GaitName> {
    prop_oneof![
        Just(GaitName::ForwardTrot),
        Just(GaitName::BackwardTrot),
        Just(GaitName::SideStep),
        Just(GaitName::Turn),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spline_passes_through_knots_with_continuous_slope(r in radii()) {
        let bounds = RadiusBounds::default();
        let pts = ControlPointSet::new(r.clone()).unwrap();
        let traj = build_trajectory(&pts, &bounds).unwrap();
        for (i, &w) in r.iter().enumerate() {
            let alpha = pts.phase(i);
            prop_assert!((traj.evaluate(alpha) - w).abs() <= 1e-12);
            let before = if i == 0 { TAU - 1e-12 } else { alpha - 1e-12 };
            prop_assert!((traj.derivative(before) - traj.derivative(alpha)).abs() <= 1e-9);
        }
        prop_assert_eq!(traj.evaluate(TAU), traj.evaluate(0.0));
    }

    #[test]
    fn wrapped_phase_is_in_range(phi in -1e4..1e4f64) {
        let w = wrap_phase(phi);
        prop_assert!((0.0..TAU).contains(&w));
        let turns = ((phi - w) / TAU).round();
        prop_assert!((phi - w - turns * TAU).abs() < 1e-9);
    }

    #[test]
    fn inverse_kinematics_inverts_forward(
        leg in 0usize..4,
        abduction in -0.5..0.5f64,
        hip in -1.4..1.4f64,
        knee in 0.2..2.6f64,
    ) {
        let model = RobotModel::default();
        let geom = &model.legs[leg];
        let (l1, l2) = (geom.upper_link_length, geom.lower_link_length);
        prop_assume!(l1 * hip.cos() + l2 * (hip + knee).cos() > 0.02);
        let angles = LegAngles::new(abduction, hip, knee);
        let p = forward_kinematics(geom, &angles);
        let solved = inverse_kinematics(geom, &model.limits, &p, angles.branch()).unwrap();
        prop_assert!((forward_kinematics(geom, &solved).position - p.position).norm() <= 1e-9);
        for (a, b) in solved.as_array().iter().zip(angles.as_array()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn foot_targets_stay_in_workspace(r in radii(), phi in 0.0..TAU, name in gait()) {
        let model = RobotModel::default();
        let workspace = FootWorkspace::default();
        let traj = build_trajectory(&ControlPointSet::new(r).unwrap(), &workspace.radii).unwrap();
        let targets = leg_targets(&traj, phi, &gait_config(name).params(), &workspace);
        for (geom, t) in model.legs.iter().zip(&targets) {
            prop_assert!(workspace_contains(geom, &workspace.bbox, &t.point));
            prop_assert!(inverse_kinematics(geom, &model.limits, &t.point, Default::default()).is_ok());
        }
    }

    #[test]
    fn policy_is_linear_before_clamping(
        m in vec(-0.05..0.05f64, 18 * STATE_DIM),
        s1 in state(),
        s2 in state(),
        a in -3.0..3.0f64,
    ) {
        let p = PolicyMatrix::new(DMatrix::from_vec(18, STATE_DIM, m)).unwrap();
        let mixed: Vec<f64> = s1.iter().zip(&s2).map(|(x, y)| a * x + y).collect();
        let lhs = p.apply(&mixed);
        let rhs = p.apply(&s1) * a + p.apply(&s2);
        prop_assert!((lhs - rhs).abs().max() <= 1e-12);
    }

    #[test]
    fn actions_are_clamped_and_clamping_is_idempotent(m in vec(-0.2..0.2f64, 18 * STATE_DIM), s in state()) {
        let bounds = RadiusBounds::default();
        let p = PolicyMatrix::new(DMatrix::from_vec(18, STATE_DIM, m)).unwrap();
        let js = JointState::from_slice(&s).unwrap();
        let out = act(&p, &js, &bounds);
        let raw = p.apply(&s);
        for (w, r) in out.radii().iter().zip(raw.iter()) {
            prop_assert!(bounds.contains(*w));
            prop_assert_eq!(*w, r.clamp(bounds.min, bounds.max));
            prop_assert_eq!(bounds.clamp(*w), *w);
        }
        prop_assert_eq!(act_corrected(&p, &Sim2RealMap::identity(), &js, &bounds), out);
    }

    #[test]
    fn mirroring_is_an_involution(s in state()) {
        let js = JointState::from_slice(&s).unwrap();
        prop_assert_eq!(js.mirrored().mirrored(), js);
    }

    #[test]
    fn fitted_map_minimises_weighted_residual(
        seed_states in vec(state(), 40),
        noise in vec(-0.01..0.01f64, 40 * STATE_DIM),
        weights in vec(0.1..1.0f64, 40),
        bump in vec(-1e-3..1e-3f64, STATE_DIM * STATE_DIM + STATE_DIM),
    ) {
        let real: Vec<JointState> = seed_states.iter().map(|s| JointState::from_slice(s).unwrap()).collect();
        let sim: Vec<JointState> = seed_states
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let v: Vec<f64> = s.iter().enumerate().map(|(j, x)| 0.9 * x + 0.02 + noise[k * STATE_DIM + j]).collect();
                JointState::from_slice(&v).unwrap()
            })
            .collect();
        let times = (0..40).map(f64::from).collect();
        let trace = StateTracePair::new(times, sim, real, weights).unwrap();
        let fit = fit_sim2real(&trace).unwrap();
        let best = weighted_residual(&fit.map, &trace);
        let moved = Sim2RealMap::new(
            &fit.map.m_hat + DMatrix::from_column_slice(STATE_DIM, STATE_DIM, &bump[..STATE_DIM * STATE_DIM]),
            &fit.map.b_bar + DVector::from_column_slice(&bump[STATE_DIM * STATE_DIM..]),
        )
        .unwrap();
        prop_assert!(best <= weighted_residual(&moved, &trace) * (1.0 + 1e-9));
    }

    #[test]
    fn ars_update_ignores_affine_return_changes(
        returns in vec((-10.0..10.0f64, -10.0..10.0f64), 16),
        entries in vec(-2.0..2.0f64, 16 * 6),
        scale in 0.1..10.0f64,
        shift in -100.0..100.0f64,
    ) {
        let deltas: Vec<DMatrix<f64>> = entries.chunks(6).map(|c| DMatrix::from_column_slice(2, 3, c)).collect();
        let theta = DMatrix::from_element(2, 3, 0.5);
        let base = update(&theta, &returns, &deltas, &select_top(&returns, 8), 0.1);
        let moved: Vec<(f64, f64)> = returns.iter().map(|&(p, m)| (scale * p + shift, scale * m + shift)).collect();
        let lifted = update(&theta, &moved, &deltas, &select_top(&moved, 8), 0.1);
        match (base, lifted) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs().max() <= 1e-10),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn blending_contracts_geometrically(alpha in 0.05..1.0f64, steps in 1usize..30, from in gait(), to in gait()) {
        let goal = gait_config(to);
        let start = gait_config(from).params();
        let mut state = start;
        for _ in 0..steps {
            state = blend_gaits(&state, &goal, alpha).unwrap();
        }
        let factor = (1.0 - alpha).powi(steps as i32);
        let target = goal.params();
        for i in 0..4 {
            let expected = target.frames[i].sweep_gain + (start.frames[i].sweep_gain - target.frames[i].sweep_gain) * factor;
            prop_assert!((state.frames[i].sweep_gain - expected).abs() <= 1e-12);
        }
    }
}
