use std::process::ExitCode;

fn main() -> ExitCode {
    movingbs::cli::main_with_args(std::env::args_os())
}
