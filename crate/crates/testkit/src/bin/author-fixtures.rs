//! Regenerate `fixtures/` from the synthetic providers.
//!
//! Usage: `cargo run -p litscout-testkit --bin author-fixtures [-- <dir>]`

use std::path::PathBuf;

fn main() {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(litscout_testkit::fixtures::fixtures_dir);
    match litscout_testkit::fixtures::author(&root) {
        Ok(report) => {
            for line in report {
                println!("{line}");
            }
        }
        Err(e) => {
            eprintln!("authoring failed: {e}");
            std::process::exit(1);
        }
    }
}
