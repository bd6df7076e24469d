use clap::Parser;
use scenetag::cli::{run, Cli, DefaultFactory};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = run(Cli::parse(), &DefaultFactory);
    std::process::exit(code);
}
