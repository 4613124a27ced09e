use std::process::ExitCode;

fn main() -> ExitCode {
    match ica::cli::run() {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
