use clap::Parser;
use insecscan::cli::{run, Args};

fn main() {
    let args = Args::parse();
    std::process::exit(run(&args));
}
