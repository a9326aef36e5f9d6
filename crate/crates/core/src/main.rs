use std::process::ExitCode;

fn main() -> ExitCode {
    match stackrecall::cli::run() {
        Ok(()) => ExitCode::SUCCESS,
        // downstream closed the pipe (e.g. `| head`); not a failure
        Err(stackrecall::Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
