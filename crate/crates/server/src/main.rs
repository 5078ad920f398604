fn main() {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_env_filter(
        tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
    ).init();
    if let Err(e) = vista_core::parallel::init_from_env() {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
    std::process::exit(vista_server::cli::main_with_args(std::env::args_os()));
}
