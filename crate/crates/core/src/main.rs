use std::io;
use std::panic;
use std::process::ExitCode;

fn main() -> ExitCode {
    // A panic is a bug, but the exit-code contract still holds.
    panic::set_hook(Box::new(|info| eprintln!("internal error: {info}")));
    let code = panic::catch_unwind(|| latentq::cli::run(std::env::args_os(), &mut io::stdout(), &mut io::stderr()))
        .unwrap_or(latentq::cli::EXIT_INPUT);
    ExitCode::from(code as u8)
}
