use clap::Parser;
use curation_laws_cli::{init_thread_pool, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = init_thread_pool().and_then(|()| run(&cli)) {
        eprintln!("curation-laws: {e}");
        std::process::exit(e.exit_code());
    }
}
