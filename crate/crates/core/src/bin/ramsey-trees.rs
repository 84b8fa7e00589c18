use clap::Parser;

use ramsey_trees::cli::{render, run, Cli};

fn main() {
    let cli = Cli::parse();
    let (text, code) = render(run(&cli), cli.output.as_deref());
    if !text.is_empty() {
        println!("{text}");
    }
    std::process::exit(code);
}
