fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    mabs::cli::init_threads();
    std::process::exit(mabs::cli::run_from_args(std::env::args_os()));
}
