use clap::Parser;

use mcp_audit::{run, Cli, EXIT_FATAL, EXIT_OK};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 2 on usage errors; 2 is reserved for "diff found"
            let _ = e.print();
            std::process::exit(if e.use_stderr() { EXIT_FATAL } else { EXIT_OK });
        }
    };
    std::process::exit(run(cli));
}
