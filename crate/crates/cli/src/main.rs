use std::process::ExitCode;

fn main() -> ExitCode {
    match asc_tool::execute(std::env::args_os()) {
        Ok(_) => ExitCode::SUCCESS,
        Err(err) => match err.downcast::<clap::Error>() {
            Ok(e) => e.exit(),
            Err(err) => {
                eprintln!("error: {err:#}");
                ExitCode::from(asc_tool::exit_code(&err))
            }
        },
    }
}
