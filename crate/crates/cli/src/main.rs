use clap::Parser;

fn main() {
    let cli = l1unwrap_cli::Cli::parse();
    let stdout = std::io::stdout();
    if let Err(e) = l1unwrap_cli::run(&cli, &mut stdout.lock()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
