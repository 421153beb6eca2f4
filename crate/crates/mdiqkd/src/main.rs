use clap::Parser;

fn main() {
    let cli = mdiqkd::cli::Cli::parse();
    std::process::exit(mdiqkd::cli::main_with(cli));
}
