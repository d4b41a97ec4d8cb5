use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = readiness::cli::Cli::parse();
    match readiness::cli::run(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
