use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(oodshift::cli::run_from(std::env::args_os()))
}
