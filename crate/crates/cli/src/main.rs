fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MTSK_LOG", "warn")).init();
    let code = mtsk_cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
