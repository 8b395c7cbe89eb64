use clap::Parser;

fn main() {
    let cli = dsen::cli::Cli::parse();
    std::process::exit(dsen::cli::run(cli));
}
