fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    svbrdf::renderer::init_threads_from_env();
    std::process::exit(svbrdf::harness::cli::run(std::env::args_os()));
}
