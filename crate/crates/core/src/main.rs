use clap::Parser;

fn main() {
    let cli = fedveil::cli::Cli::parse();
    std::process::exit(fedveil::cli::execute(cli));
}
