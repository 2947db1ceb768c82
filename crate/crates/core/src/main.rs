use clap::Parser;

use psin::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("psin: {e}");
        std::process::exit(e.exit_code());
    }
}
