use std::process::ExitCode;

fn main() -> ExitCode {
    poac::cli::main_with(std::env::args_os())
}
