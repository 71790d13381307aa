//! Parses a run configuration, resolves its defaults and prints the result.
//!
//! `cargo run --example run_config`

use gaitforge::config::RunConfig;

const CONFIG: &str = r#"
seed = 11
output_dir = "runs/turn"

[gait]
name = "turn"

[ars]
iterations = 60
workers = 4

[env]
episode_steps = 30
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = RunConfig::from_toml(CONFIG)?;
    config.validate()?;
    let ars = config.ars_config()?;
    println!(
        "gait {}, beta {}, nu {}, {} directions, {} iterations",
        config.primary_gait(),
        ars.step_size_beta,
        ars.noise_nu,
        ars.num_directions,
        ars.iterations
    );
    println!("digest {}", config.digest());
    println!("{}", config.to_toml());

    match RunConfig::from_toml("[ars]\nbeta = 0.1\n") {
        Ok(_) => println!("unexpectedly accepted an unknown key"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
