//! Trains one policy on a weighted mix of gaits and reports each gait's return.
//!
//! `cargo run --release --example multi_gait`

use gaitforge::ars::{train, ArsConfig};
use gaitforge::gaits::{gait_config, run_episode, EnvFactory, MultiGaitObjective, MultiGaitSpec};
use gaitforge::kinematics::STATE_DIM;
use gaitforge::policy::PolicyMatrix;
use gaitforge::trajectory::{GaitName, DEFAULT_CONTROL_POINTS};
use nalgebra::DMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gaits = [GaitName::ForwardTrot, GaitName::Turn];
    let spec = MultiGaitSpec::new(vec![
        (gait_config(gaits[0]), 1.0),
        (gait_config(gaits[1]), 0.25),
    ])?;
    let factory = EnvFactory::default();
    let objective = MultiGaitObjective {
        factory: factory.clone(),
        spec: spec.clone(),
        steps: 10,
    };
    let config = ArsConfig {
        iterations: 20,
        seed: 3,
        workers: 4,
        ..ArsConfig::for_gait(GaitName::ForwardTrot)
    };
    let outcome = train(
        &objective,
        &config,
        DMatrix::zeros(DEFAULT_CONTROL_POINTS, STATE_DIM),
    )?;
    println!(
        "{}: weighted return {:.3} -> {:.3}",
        spec.label(),
        outcome.initial_return,
        outcome.final_return()
    );

    let policy = PolicyMatrix::new(outcome.theta)?;
    for name in gaits {
        let episode = run_episode(&factory, &gait_config(name), &policy, 10, 3)?;
        println!(
            "{name}: return {:.3}, fell {}",
            episode.total_return, episode.fell
        );
    }
    Ok(())
}
