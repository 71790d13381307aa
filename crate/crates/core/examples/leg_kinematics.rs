//! Forward and inverse kinematics of one leg, plus the workspace check.
//!
//! `cargo run --example leg_kinematics`

use gaitforge::env::RobotModel;
use gaitforge::kinematics::{
    forward_kinematics, inverse_kinematics, workspace_contains, KneeBranch, LegAngles, WorkspaceBox,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = RobotModel::default();
    let geom = &model.legs[0];
    let bbox = WorkspaceBox::default();

    let angles = LegAngles::new(0.1, -0.6, 1.3);
    let foot = forward_kinematics(geom, &angles);
    println!(
        "angles {:?} -> foot {:?}",
        angles.as_array(),
        foot.position.as_slice()
    );

    for branch in [KneeBranch::Backward, KneeBranch::Forward] {
        match inverse_kinematics(geom, &model.limits, &foot, branch) {
            Ok(a) => println!("{branch:?} knee: {:?}", a.as_array()),
            Err(e) => println!("{branch:?} knee: {e}"),
        }
    }
    println!(
        "inside workspace box: {}",
        workspace_contains(geom, &bbox, &foot)
    );
    Ok(())
}
