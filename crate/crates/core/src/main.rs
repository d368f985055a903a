use clap::Parser;

fn main() {
    let cli = unimom::cli::Cli::parse();
    if let Err(e) = unimom::cli::run(cli) {
        eprintln!("unimom: error: {e}");
        std::process::exit(1);
    }
}
