use std::process::ExitCode;

fn main() -> ExitCode {
    immunet_cli::run_cli(std::env::args_os())
}
