use clap::Parser;
use qnet_cli::Cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = qnet_cli::run(Cli::parse()) {
        eprintln!("qnet: {e}");
        std::process::exit(e.exit_code());
    }
}
