use clap::Parser;

fn main() {
    let cli = ranp::cli::Cli::parse();
    if let Err(e) = ranp::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
