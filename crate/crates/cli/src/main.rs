use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match hfur_cli::run(&args) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<clap::Error>() {
            Some(ce) => {
                let _ = ce.print();
                ExitCode::from(if ce.use_stderr() { 2 } else { 0 })
            }
            None => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}
