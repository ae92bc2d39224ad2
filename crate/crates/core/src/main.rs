use clap::Parser;

fn main() {
    let cli = rebel::cli::Cli::parse();
    std::process::exit(rebel::cli::run(cli));
}
