use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(vte_cli::run(std::env::args_os()))
}
