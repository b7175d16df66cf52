use clap::Parser;

fn main() {
    let cli = nvar_cli::Cli::parse();
    if let Err(e) = nvar_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
