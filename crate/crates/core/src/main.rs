use clap::Parser;
use isac_opt::cli::{self, Cli};

fn main() {
    let args = Cli::parse();
    let code = match cli::run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code(&e)
        }
    };
    std::process::exit(code);
}
