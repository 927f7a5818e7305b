use clap::Parser;

fn main() {
    let cli = garment_gan::cli::Cli::parse();
    if let Err(e) = garment_gan::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
