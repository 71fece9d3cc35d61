use clap::Parser;

fn main() {
    let cli = parkdur::cli::Cli::parse();
    if let Err(e) = parkdur::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
