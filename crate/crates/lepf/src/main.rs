use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = lepf::cli::Cli::parse();
    std::process::ExitCode::from(lepf::cli::run(cli))
}
