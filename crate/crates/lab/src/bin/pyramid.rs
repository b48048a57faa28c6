use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(pyramid_lab::cli::run(std::env::args_os()))
}
