use std::process::ExitCode;

use clap::Parser;
use twistlab_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(checks) => {
            let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
            for c in &failed {
                eprintln!("FAIL {} {}", c.name, c.detail);
            }
            println!(
                "{}: {} checks, {} failed, summary in {}",
                cli.command.name(),
                checks.len(),
                failed.len(),
                cli.out.join("summary.txt").display()
            );
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
