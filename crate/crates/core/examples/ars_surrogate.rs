//! Augmented Random Search on a quadratic objective with a known optimum.
//!
//! `cargo run --release --example ars_surrogate`

use gaitforge::ars::{train_with, ArsConfig, QuadraticSurrogate};
use nalgebra::DMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let objective = QuadraticSurrogate::random((18, 12), 0.01, 1);
    let config = ArsConfig {
        step_size_beta: 0.001,
        noise_nu: 0.01,
        num_directions: 16,
        top_directions: 8,
        iterations: 200,
        seed: 1,
        workers: 4,
        checkpoint_every: 0,
    };
    let outcome = train_with(
        &objective,
        &config,
        DMatrix::zeros(18, 12),
        &mut |r, theta| {
            if (r.iteration + 1) % 25 == 0 {
                println!(
                    "iteration {:>3}: return {:>10.6}, distance to optimum {:.5}",
                    r.iteration + 1,
                    r.eval_return,
                    objective.distance(theta)
                );
            }
        },
    )?;
    println!("final distance {:.5}", objective.distance(&outcome.theta));
    Ok(())
}
