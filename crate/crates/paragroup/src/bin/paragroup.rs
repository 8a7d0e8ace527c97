use std::process::ExitCode;

fn main() -> ExitCode {
    paragroup::cli::main_with(std::env::args_os())
}
