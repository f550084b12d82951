use clap::Parser;
use saddlepoint::cli::{run, RunConfig};

fn main() {
    let config = RunConfig::parse();
    if let Err(e) = run(config) {
        eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
        std::process::exit(1);
    }
}
