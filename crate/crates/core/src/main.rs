fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GAITFORGE_LOG", "warn")).init();
    std::process::exit(gaitforge::cli::main_with_args(std::env::args().collect()));
}
