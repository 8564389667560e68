use clap::Parser;

fn main() {
    std::process::exit(dmamab::cli::main_with(dmamab::cli::Args::parse()));
}
