use clap::Parser;

fn main() {
    let cli = adaptive_pp_cli::Cli::parse();
    let status = adaptive_pp_cli::execute(&cli, std::io::stdout());
    std::process::exit(status.exit_code());
}
