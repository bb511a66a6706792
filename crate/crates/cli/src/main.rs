use clap::Parser;

fn main() {
    let cli = ramsey_probe_cli::Cli::parse();
    if let Err(err) = ramsey_probe_cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
