use std::process::ExitCode;

fn main() -> ExitCode {
    fpe_mpc::cli::main_with_args(std::env::args_os())
}
