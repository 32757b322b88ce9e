use std::io::Write;

use clap::Parser;

use distortcox::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(outcome.report.as_bytes());
            for f in &outcome.files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
