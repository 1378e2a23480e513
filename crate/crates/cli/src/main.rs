use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = piece_cli::parse_args();
    match piece_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
