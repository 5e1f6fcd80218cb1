use clap::Parser;
use galerkin_cli::cli::Cli;

fn main() {
    let cli = Cli::parse();
    std::process::exit(galerkin_cli::run(&cli));
}
