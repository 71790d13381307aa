//! Walks a forward trot, then blends into a turn and prints the blend state.
//!
//! `cargo run --release --example gait_transition`

use gaitforge::gaits::{gait_config, run_transition, EnvFactory, TransitionPlan};
use gaitforge::kinematics::STATE_DIM;
use gaitforge::policy::PolicyMatrix;
use gaitforge::trajectory::GaitName;
use nalgebra::DMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let policy = PolicyMatrix::new(DMatrix::from_element(18, STATE_DIM, 0.002))?;
    let plan = TransitionPlan {
        from: gait_config(GaitName::ForwardTrot),
        to: gait_config(GaitName::Turn),
        alpha: 0.3,
        switch_at: 4,
    };
    let mut env = EnvFactory::default().make(&plan.from)?;
    env.reset(&plan.from, 0);
    let (result, schedule) = run_transition(&mut env, &policy, &plan, 20, None, None)?;
    println!(
        "{:>4} {:>12} {:>10} {:>10} {:>10}",
        "step", "heading_fl", "gap_m", "x_m", "yaw_rad"
    );
    for (k, s) in schedule.iter().enumerate() {
        println!(
            "{k:>4} {:>12.5} {:>10.2e} {:>10.3} {:>10.3}",
            s.params.frames[0].heading, s.gap, result.x_positions[k], result.yaws[k]
        );
    }
    Ok(())
}
