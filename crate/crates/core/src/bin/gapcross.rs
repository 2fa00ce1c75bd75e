use clap::Parser;

fn main() {
    let cli = gapcross::cli::Cli::parse();
    if let Err(e) = gapcross::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(gapcross::cli::exit_code(&e));
    }
}
