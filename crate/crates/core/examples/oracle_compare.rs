//! Loads a problem file, solves it and compares with the matching oracle.
//!
//!     cargo run --example oracle_compare -- crates/core/data/powerset_12.json

use std::path::PathBuf;

use regionalized::cli::{self, SolveOptions};

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data/diamond_gbp.json")));
    let out = cli::cmd_oracle_compare(&path, &SolveOptions::default());
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    std::process::exit(out.code);
}
