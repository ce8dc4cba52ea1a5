use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(dimred_cli::main_with_args(std::env::args_os()))
}
