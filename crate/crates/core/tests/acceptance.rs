//! End-to-end acceptance suite. Each criterion prints one `PASS`/`FAIL`
//! line with its measured figures; the process fails if any criterion does.

use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use gaitforge::ars::{
    select_top, train, train_with, update, ArsConfig, ArsError, Objective, QuadraticSurrogate,
    TrainOutcome,
};
use gaitforge::env::{physics_substep, ContactParams, RobotModel, WorldState, GRAVITY};
use gaitforge::gaits::{
    gait_config, run_episode, run_transition, EnvFactory, MultiGaitObjective, MultiGaitSpec,
    TransitionPlan,
};
use gaitforge::kinematics::{
    forward_kinematics, inverse_kinematics, JointState, LegAngles, STATE_DIM,
};
use gaitforge::policy::{fit_sim2real, PolicyMatrix, StateTracePair};
use gaitforge::trajectory::{
    build_trajectory, ControlPointSet, GaitName, PhaseState, RadiusBounds,
};

const SEED: u64 = 1;
const TRAIN_WORKERS: usize = 4;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let mut v = f();
    let elapsed = start.elapsed();
    v.detail = format!("{}; {:.2} s", v.detail, elapsed.as_secs_f64());
    if let Some(limit) = limit {
        if elapsed > limit {
            v.pass = false;
            v.detail = format!("{} exceeds {} s", v.detail, limit.as_secs());
        }
    }
    v
}

fn spline_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let bounds = RadiusBounds::default();
    let (mut knot_err, mut c1_err) = (0.0f64, 0.0f64);
    let mut periodic = true;
    for _ in 0..1000 {
        let n = rng.random_range(6..=24);
        let radii: Vec<f64> = (0..n)
            .map(|_| rng.random_range(bounds.min..=bounds.max))
            .collect();
        let pts = ControlPointSet::new(radii.clone()).unwrap();
        let traj = build_trajectory(&pts, &bounds).unwrap();
        for (i, &w) in radii.iter().enumerate() {
            let alpha = pts.phase(i);
            knot_err = knot_err.max((traj.evaluate(alpha) - w).abs());
            // Slope just before the knot comes from the previous segment.
            let before = if i == 0 { TAU - 1e-12 } else { alpha - 1e-12 };
            c1_err = c1_err.max((traj.derivative(before) - traj.derivative(alpha)).abs());
        }
        periodic &= traj.evaluate(TAU) == traj.evaluate(0.0);
        for _ in 0..8 {
            // Shifts by exactly one period on [π, 2π).
            let phi = rng.random_range(PI..TAU);
            periodic &= traj.evaluate(phi - TAU) == traj.evaluate(phi);
            periodic &= traj.derivative(phi - TAU) == traj.derivative(phi);
        }
    }
    verdict(
        knot_err <= 1e-12 && c1_err <= 1e-9 && periodic,
        format!("knot error {knot_err:.1e}, C1 jump {c1_err:.1e}, periodic {periodic}"),
    )
}

fn kinematics_round_trip() -> Verdict {
    let model = RobotModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut pos_err, mut ang_err) = (0.0f64, 0.0f64);
    let mut failures = 0;
    for geom in &model.legs {
        let (l1, l2) = (geom.upper_link_length, geom.lower_link_length);
        let mut sampled = 0;
        while sampled < 10_000 {
            let angles = LegAngles::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-1.4..1.4),
                rng.random_range(0.2..2.6),
            );
            // Reachable points keep the foot below the hip in the leg plane.
            if l1 * angles.hip.cos() + l2 * (angles.hip + angles.knee).cos() < 0.02 {
                continue;
            }
            sampled += 1;
            let p = forward_kinematics(geom, &angles);
            match inverse_kinematics(geom, &model.limits, &p, angles.branch()) {
                Ok(solved) => {
                    let back = forward_kinematics(geom, &solved);
                    pos_err = pos_err.max((back.position - p.position).norm());
                    let d = Vector3::from(solved.as_array()) - Vector3::from(angles.as_array());
                    ang_err = ang_err.max(d.abs().max());
                }
                Err(_) => failures += 1,
            }
        }
    }
    verdict(
        failures == 0 && pos_err <= 1e-9 && ang_err <= 1e-9,
        format!("FK(IK) {pos_err:.1e} m, IK(FK) {ang_err:.1e} rad, {failures} unsolved of 40000"),
    )
}

fn surrogate_config(seed: u64) -> ArsConfig {
    ArsConfig {
        step_size_beta: 0.001,
        noise_nu: 0.01,
        num_directions: 16,
        top_directions: 8,
        iterations: 200,
        seed,
        workers: 1,
        checkpoint_every: 0,
    }
}

fn surrogate_convergence() -> Verdict {
    let mut reached = Vec::new();
    for seed in 1..=5u64 {
        let objective = QuadraticSurrogate::random((18, 12), 0.01, 100 + seed);
        let mut first = None;
        let theta0 = DMatrix::zeros(18, 12);
        train_with(
            &objective,
            &surrogate_config(seed),
            theta0,
            &mut |r, theta| {
                if first.is_none() && objective.distance(theta) < 1e-2 {
                    first = Some(r.iteration + 1);
                }
            },
        )
        .unwrap();
        reached.push(first);
    }
    let pass = reached.iter().all(Option::is_some);
    verdict(
        pass,
        format!("iterations to ||θ−θ*|| < 1e-2 per seed: {reached:?}"),
    )
}

struct Affine<O> {
    inner: O,
    scale: f64,
    shift: f64,
}

impl<O: Objective> Objective for Affine<O> {
    fn evaluate(&self, theta: &DMatrix<f64>, env_seed: u64) -> Result<f64, ArsError> {
        Ok(self.scale * self.inner.evaluate(theta, env_seed)? + self.shift)
    }
}

fn forward_objective(steps: usize) -> MultiGaitObjective {
    MultiGaitObjective {
        factory: EnvFactory::default(),
        spec: MultiGaitSpec::single(gait_config(GaitName::ForwardTrot)),
        steps,
    }
}

fn ars_invariances() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let theta = DMatrix::from_fn(18, 12, |_, _| rng.random_range(-1.0..1.0));
    let deltas: Vec<DMatrix<f64>> = (0..16)
        .map(|_| DMatrix::from_fn(18, 12, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let returns: Vec<(f64, f64)> = (0..16)
        .map(|_| (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
        .collect();
    let base = update(&theta, &returns, &deltas, &select_top(&returns, 8), 0.05).unwrap();
    let mut step_err = 0.0f64;
    for (a, c) in [(1.0, 1e3), (3.7, -42.0), (0.01, 7.5)] {
        let shifted: Vec<(f64, f64)> = returns
            .iter()
            .map(|&(p, m)| (a * p + c, a * m + c))
            .collect();
        let moved = update(&theta, &shifted, &deltas, &select_top(&shifted, 8), 0.05).unwrap();
        step_err = step_err.max((moved - &base).abs().max());
    }

    let surrogate = QuadraticSurrogate::random((18, 12), 0.01, 7);
    let mut cfg = surrogate_config(3);
    cfg.iterations = 10;
    let plain = train(&surrogate, &cfg, DMatrix::zeros(18, 12)).unwrap();
    let affine = Affine {
        inner: surrogate.clone(),
        scale: 2.5,
        shift: 100.0,
    };
    let lifted = train(&affine, &cfg, DMatrix::zeros(18, 12)).unwrap();
    let train_err = (&lifted.theta - &plain.theta).abs().max();

    let objective = forward_objective(20);
    let runs: Vec<TrainOutcome> = [1, 4, 20]
        .iter()
        .map(|&workers| {
            let cfg = ArsConfig {
                iterations: 10,
                seed: SEED,
                workers,
                ..ArsConfig::for_gait(GaitName::ForwardTrot)
            };
            train(&objective, &cfg, DMatrix::zeros(18, STATE_DIM)).unwrap()
        })
        .collect();
    let bits = |o: &TrainOutcome| o.theta.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let evals = |o: &TrainOutcome| {
        o.records
            .iter()
            .map(|r| r.eval_return.to_bits())
            .collect::<Vec<_>>()
    };
    let identical = runs
        .windows(2)
        .all(|w| bits(&w[0]) == bits(&w[1]) && evals(&w[0]) == evals(&w[1]));
    verdict(
        step_err <= 1e-10 && train_err <= 1e-10 && identical,
        format!(
            "affine update error {step_err:.1e}, affine training error {train_err:.1e}, \
             workers 1/4/20 bit-identical {identical}"
        ),
    )
}

fn train_gait(gait: GaitName) -> TrainOutcome {
    let objective = MultiGaitObjective {
        steps: 20,
        spec: MultiGaitSpec::single(gait_config(gait)),
        ..forward_objective(20)
    };
    let cfg = ArsConfig {
        seed: SEED,
        workers: TRAIN_WORKERS,
        ..ArsConfig::for_gait(gait)
    };
    train(&objective, &cfg, DMatrix::zeros(18, STATE_DIM)).unwrap()
}

fn desk_training(forward: &PolicyMatrix, forward_outcome: &TrainOutcome) -> Verdict {
    let factory = EnvFactory::default();
    let trot = gait_config(GaitName::ForwardTrot);
    let (initial, last) = (
        forward_outcome.initial_return,
        forward_outcome.final_return(),
    );
    let doubled = last >= 2.0 * initial && initial > 0.0;
    let roll = run_episode(&factory, &trot, forward, 50, SEED).unwrap();
    let x = roll.x_positions.last().copied().unwrap_or(0.0);
    let walked = roll.steps() == 50 && x > 0.0;

    let turn_outcome = train_gait(GaitName::Turn);
    let turn_policy = PolicyMatrix::new(turn_outcome.theta.clone()).unwrap();
    let turn = run_episode(
        &factory,
        &gait_config(GaitName::Turn),
        &turn_policy,
        50,
        SEED,
    )
    .unwrap();
    let positive = turn.yaws.iter().all(|&y| y > 0.0);
    let negative = turn.yaws.iter().all(|&y| y < 0.0);
    let one_sign = turn.steps() == 50 && (positive || negative);
    verdict(
        doubled && walked && one_sign,
        format!(
            "forward trot return {initial:.2} -> {last:.2} (x{:.2}), 50-step x {x:.3} m{}; \
             turn yaw after 50 steps {:.3} rad, single-signed {one_sign}",
            last / initial,
            if roll.fell { " (fell)" } else { "" },
            turn.yaws.last().copied().unwrap_or(0.0)
        ),
    )
}

fn sim2real_fitter() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let m = DMatrix::from_fn(STATE_DIM, STATE_DIM, |i, j| {
        (if i == j { 1.0 } else { 0.0 }) + rng.random_range(-0.05..0.05)
    });
    let b = DVector::from_fn(STATE_DIM, |_, _| rng.random_range(-0.05..0.05));
    let n = 400;
    let noise = Normal::new(0.0, 0.01).unwrap();
    let real: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_fn(STATE_DIM, |_, _| rng.random_range(-0.8..0.8)))
        .collect();
    let make = |noisy: bool, rng: &mut ChaCha8Rng| {
        let sim = real
            .iter()
            .map(|r| {
                let mut s = &m * r + &b;
                if noisy {
                    s.iter_mut().for_each(|v| *v += noise.sample(rng));
                }
                JointState::from_slice(s.as_slice()).unwrap()
            })
            .collect();
        let real_states = real
            .iter()
            .map(|r| JointState::from_slice(r.as_slice()).unwrap())
            .collect();
        let times = (0..n).map(|k| k as f64 * 0.01).collect();
        StateTracePair::new(times, sim, real_states, vec![1.0; n]).unwrap()
    };
    let exact = fit_sim2real(&make(false, &mut rng)).unwrap();
    let noisy = fit_sim2real(&make(true, &mut rng)).unwrap();
    let recovered = (&exact.map.m_hat - &m)
        .abs()
        .max()
        .max((&exact.map.b_bar - &b).abs().max());
    verdict(
        exact.max_residual() < 1e-8 && noisy.max_residual() <= 0.012,
        format!(
            "exact residual {:.1e} rad (map error {recovered:.1e}), noisy residual {:.4} rad",
            exact.max_residual(),
            noisy.max_residual()
        ),
    )
}

fn physics_sanity() -> Verdict {
    let factory = EnvFactory::default();
    let trot = gait_config(GaitName::ForwardTrot);
    let mut env = factory.make(&trot).unwrap();
    env.reset(&trot, 0);
    let nominal = env.nominal_angles().unwrap();

    let model = RobotModel::default();
    let contact = ContactParams::default();
    let mut start = WorldState::at_rest(
        Vector3::new(0.0, 5.0, 0.0),
        nominal,
        PhaseState::new(0.0, 0.25).unwrap(),
    );
    start.linear_velocity = Vector3::new(1.5, 2.0, -0.5);
    let mut w = start.clone();
    for _ in 0..100 {
        w = physics_substep(&model, &contact, &w, &[0.0; STATE_DIM], 0.001)
            .unwrap()
            .0;
    }
    let t = 0.1;
    let g = Vector3::new(0.0, -GRAVITY, 0.0);
    let expected = start.position + start.linear_velocity * t + 0.5 * g * t * t;
    let fall_err = (w.position - expected).norm();

    let forces = env.hold(&nominal, 3.0).unwrap();
    let mg = model.mass * model.gravity;
    let rel = (forces.total().y - mg).abs() / mg;
    verdict(
        fall_err <= 1e-6 && rel <= 0.01,
        format!(
            "free-fall error {fall_err:.1e} m, stance load {:.3}% off m·g",
            rel * 100.0
        ),
    )
}

fn transition_continuity(forward: &PolicyMatrix) -> Verdict {
    let factory = EnvFactory::default();
    let plan = TransitionPlan {
        from: gait_config(GaitName::ForwardTrot),
        to: gait_config(GaitName::Turn),
        alpha: 0.3,
        switch_at: 5,
    };
    let mut env = factory.make(&plan.from).unwrap();
    env.reset(&plan.from, SEED);
    let steps = plan.switch_at + 20;
    let (result, schedule) = run_transition(&mut env, forward, &plan, steps, None, None).unwrap();
    let gaps: Vec<f64> = schedule[plan.switch_at..].iter().map(|s| s.gap).collect();
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
    let converged = gaps.iter().position(|&g| g < 1e-3);
    verdict(
        !result.fell && gaps.len() == 20 && monotone && converged.is_some(),
        format!(
            "gap {:.2e} m at the switch, {:.2e} m after 20 steps, monotone {monotone}, below 1e-3 m after {} steps",
            gaps.first().copied().unwrap_or(f64::NAN),
            gaps.last().copied().unwrap_or(f64::NAN),
            converged.map_or("never".to_string(), |k| (k + 1).to_string())
        ),
    )
}

fn limit_cycle(forward: &PolicyMatrix) -> Verdict {
    let bounds = RadiusBounds::default();
    let threshold = 0.05 * bounds.width() * (18f64).sqrt();
    let roll = run_episode(
        &EnvFactory::default(),
        &gait_config(GaitName::ForwardTrot),
        forward,
        50,
        SEED,
    )
    .unwrap();
    let diffs: Vec<f64> = roll
        .actions
        .windows(2)
        .map(|w| {
            w[0].radii()
                .iter()
                .zip(w[1].radii())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let settled = (0..diffs.len()).find(|&k| diffs[k..].iter().all(|&d| d < threshold));
    verdict(
        roll.steps() == 50 && settled.is_some_and(|k| k <= 10),
        format!(
            "threshold {threshold:.2e}, settled from step {}, largest late difference {:.2e}",
            settled.map_or("never".to_string(), |k| k.to_string()),
            diffs.iter().skip(10).copied().fold(0.0, f64::max)
        ),
    )
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let mut verdicts = vec![
        ("1 spline correctness", timed(secs(5), spline_correctness)),
        (
            "2 kinematics round trip",
            timed(secs(10), kinematics_round_trip),
        ),
        (
            "3 ARS surrogate convergence",
            timed(secs(30), surrogate_convergence),
        ),
        ("4 ARS invariances", timed(None, ars_invariances)),
    ];

    let start = Instant::now();
    let forward_outcome = train_gait(GaitName::ForwardTrot);
    let forward = PolicyMatrix::new(forward_outcome.theta.clone()).unwrap();
    let mut five = desk_training(&forward, &forward_outcome);
    let elapsed = start.elapsed();
    five.detail = format!(
        "{}; training and rollouts {:.1} s",
        five.detail,
        elapsed.as_secs_f64()
    );
    if elapsed > Duration::from_secs(15 * 60) {
        five.pass = false;
    }
    verdicts.push(("5 desk-scale training", five));
    verdicts.push(("6 sim-to-real fitter", timed(secs(5), sim2real_fitter)));
    verdicts.push(("7 physics sanity", timed(None, physics_sanity)));
    verdicts.push((
        "8 transition continuity",
        timed(None, || transition_continuity(&forward)),
    ));
    verdicts.push((
        "9 limit-cycle convergence",
        timed(None, || limit_cycle(&forward)),
    ));

    let mut failed = 0;
    for (name, v) in &verdicts {
        println!(
            "{} criterion {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} of {} criteria pass",
        verdicts.len() - failed,
        verdicts.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
