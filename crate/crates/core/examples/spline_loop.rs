//! Builds a closed foot loop from 18 control radii and samples it.
//!
//! `cargo run --example spline_loop`

use std::f64::consts::TAU;

use gaitforge::trajectory::{build_trajectory, ControlPointSet, RadiusBounds};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bounds = RadiusBounds::default();
    // Short, flat stance half and a taller swing half.
    let radii: Vec<f64> = (0..18)
        .map(|i| {
            if i < 9 {
                bounds.min + 0.005
            } else {
                bounds.max - 0.002
            }
        })
        .collect();
    let points = ControlPointSet::new(radii)?;
    let traj = build_trajectory(&points, &bounds)?;

    println!("{:>8} {:>10} {:>12}", "phase", "radius_m", "slope_m/rad");
    for k in 0..24 {
        let phi = k as f64 * TAU / 24.0;
        println!(
            "{phi:>8.3} {:>10.5} {:>12.5}",
            traj.evaluate(phi),
            traj.derivative(phi)
        );
    }
    Ok(())
}
