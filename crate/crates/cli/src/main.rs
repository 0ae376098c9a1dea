use clap::Parser;

fn main() {
    let cli = kgcrs_cli::Cli::parse();
    if let Err(e) = kgcrs_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
