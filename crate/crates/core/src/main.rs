use clap::Parser;

use osclab::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    let code = match run(cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("osclab: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
