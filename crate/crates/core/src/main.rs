use std::process::ExitCode;

fn main() -> ExitCode {
    corridor_core::cli::run()
}
