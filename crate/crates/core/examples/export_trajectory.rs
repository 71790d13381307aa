//! Writes the front-left foot path a policy commands for the reset stance
//! as CSV on stdout.
//!
//! `cargo run --example export_trajectory > fl.csv`

use gaitforge::gaits::{gait_config, EnvFactory};
use gaitforge::kinematics::{Leg, STATE_DIM};
use gaitforge::policy::{act, PolicyMatrix};
use gaitforge::trajectory::{build_trajectory, write_trajectory_csv, GaitName};
use nalgebra::DMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gait = gait_config(GaitName::SideStep);
    let factory = EnvFactory::default();
    let mut env = factory.make(&gait)?;
    let state = env.reset(&gait, 0);
    let workspace = factory.config.workspace;

    let policy = PolicyMatrix::new(DMatrix::from_fn(18, STATE_DIM, |i, j| {
        0.01 * ((i + j) as f64).sin()
    }))?;
    let points = act(&policy, &state, &workspace.radii);
    let traj = build_trajectory(&points, &workspace.radii)?;
    let params = gait.params();
    let leg = Leg::FrontLeft.index();
    write_trajectory_csv(
        std::io::stdout().lock(),
        &traj,
        &params.frames[leg],
        params.offsets[leg],
        &workspace,
        72,
    )?;
    Ok(())
}
