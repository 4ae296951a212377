use clap::Parser;

fn main() {
    let cli = falsitrack::cli::Cli::parse();
    if let Err(e) = falsitrack::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
