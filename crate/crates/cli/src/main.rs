use clap::Parser;

fn main() {
    let cli = lmx_cli::Cli::parse();
    if let Err(e) = lmx_cli::execute(&cli) {
        eprintln!("lmx: {e}");
        std::process::exit(e.exit_code());
    }
}
