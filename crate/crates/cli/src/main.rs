use clap::Parser;

fn main() {
    let args = mogfit::cli::Cli::parse();
    std::process::exit(mogfit::cli::run(args));
}
