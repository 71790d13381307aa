//! Trains a forward trot from a zero policy, then walks it for 50 gait steps.
//!
//! `cargo run --release --example train_trot [seed]`

use gaitforge::ars::{train_with, ArsConfig};
use gaitforge::gaits::{gait_config, run_episode, EnvFactory, MultiGaitObjective, MultiGaitSpec};
use gaitforge::kinematics::STATE_DIM;
use gaitforge::policy::PolicyMatrix;
use gaitforge::trajectory::{GaitName, DEFAULT_CONTROL_POINTS};
use nalgebra::DMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(1);
    let gait = gait_config(GaitName::ForwardTrot);
    let factory = EnvFactory::default();
    let objective = MultiGaitObjective {
        factory: factory.clone(),
        spec: MultiGaitSpec::single(gait.clone()),
        steps: 20,
    };
    let config = ArsConfig {
        seed,
        workers: 4,
        ..ArsConfig::for_gait(GaitName::ForwardTrot)
    };
    let theta0 = DMatrix::zeros(DEFAULT_CONTROL_POINTS, STATE_DIM);
    let outcome = train_with(&objective, &config, theta0, &mut |r, _| {
        println!(
            "iteration {:>2}: eval return {:>8.3}, sigma_R {:.3}",
            r.iteration + 1,
            r.eval_return,
            r.sigma_r
        );
    })?;
    println!(
        "return {:.3} -> {:.3}",
        outcome.initial_return,
        outcome.final_return()
    );

    let policy = PolicyMatrix::new(outcome.theta)?;
    let walk = run_episode(&factory, &gait, &policy, 50, seed)?;
    println!(
        "50 gait steps: x {:.3} m, yaw {:.3} rad, fell {}",
        walk.x_positions.last().copied().unwrap_or(0.0),
        walk.yaws.last().copied().unwrap_or(0.0),
        walk.fell
    );
    Ok(())
}
