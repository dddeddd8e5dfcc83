use clap::Parser;
use sqlgen::cli::{run_to_stdout, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SQLGEN_LOG", "error"))
        .format_timestamp(None)
        .init();
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    if let Err(f) = run_to_stdout(cli) {
        eprintln!("error: {}", f.message.replace('\n', " "));
        std::process::exit(f.kind.exit_code());
    }
}
