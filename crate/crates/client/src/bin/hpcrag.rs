use clap::Parser;
use hpcrag_client::cli::{run, Cli};

#[tokio::main]
async fn main() {
    let cli = Cli::parse();
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let mut out = std::io::stdout();
    if let Err(e) = run(cli, &mut input, &mut out).await {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
