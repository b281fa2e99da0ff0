use clap::Parser;

fn main() {
    let cli = orderlab::Cli::parse();
    if let Err(e) = orderlab::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
