use std::process::ExitCode;

fn main() -> ExitCode {
    sq_core::cli::configure_threads();
    let code = sq_core::cli::main_with_args(
        std::env::args_os(),
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    ExitCode::from(code as u8)
}
