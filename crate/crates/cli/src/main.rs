use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    match dpfl_cli::run_command(std::env::args_os()) {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if e.code == 0 {
                // Help or version text.
                println!("{}", e.message);
                ExitCode::SUCCESS
            } else {
                let _ = writeln!(std::io::stderr(), "{}", e.message.trim_end());
                ExitCode::from(e.code as u8)
            }
        }
    }
}
