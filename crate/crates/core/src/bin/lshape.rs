use clap::Parser;

fn main() {
    let cli = loss_shaping::cli::Cli::parse();
    std::process::exit(loss_shaping::cli::run(cli));
}
