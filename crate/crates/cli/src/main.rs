use clap::Parser;

fn main() {
    let status = rpad_cli::run(rpad_cli::Cli::parse());
    std::process::exit(status.code());
}
