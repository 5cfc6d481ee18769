use std::io;

fn main() -> std::process::ExitCode {
    let code = prl_core::cli::run(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    std::process::ExitCode::from(code as u8)
}
