//! The full desk-scale reproduction: herd, splits, training, sweep, plots and
//! the acceptance checks. Takes about a quarter of an hour on one core.
//!
//! cargo run --release --example repro_walkthrough -- /tmp/repro

use herdmetric::repro::{run_repro, ReproOptions};

fn main() -> herdmetric::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "repro".into());
    let report = run_repro(&ReproOptions {
        out: out.into(),
        ..ReproOptions::default()
    })?;
    print!("{}", report.to_markdown());
    if !report.all_passed() {
        std::process::exit(1);
    }
    Ok(())
}
