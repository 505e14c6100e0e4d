//! A small accuracy-versus-openness sweep, written as CSV and SVG.
//!
//! cargo run --release --example openness_sweep -- /tmp/sweep

use herdmetric::coatgen::{generate_herd, HerdConfig};
use herdmetric::embednet::TrainConfig;
use herdmetric::losses::LossKind;
use herdmetric::openset::{openness_sweep, results_csv, summary_csv, SweepConfig};
use herdmetric::plot::openness_svg;

fn main() -> herdmetric::Result<()> {
    let dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "sweep_example".into()));
    let herd = generate_herd(&HerdConfig::new(8, 20, 5))?;
    let config = SweepConfig {
        train: TrainConfig {
            epochs: 8,
            ..TrainConfig::default()
        },
        ratios: vec![0.25, 0.5, 0.75],
        reps: 1,
        loss_kinds: vec![LossKind::Softmax, LossKind::SoftmaxReciprocalTriplet],
        master_seed: 5,
        max_distance: None,
    };
    let table = openness_sweep(&herd, &config)?;
    print!("{}", summary_csv(&table.summary));
    std::fs::create_dir_all(&dir).map_err(|e| herdmetric::Error::io(&dir, e))?;
    for (name, text) in [
        ("results.csv", results_csv(&table.runs)),
        ("summary.csv", summary_csv(&table.summary)),
        ("accuracy_vs_openness.svg", openness_svg(&table.summary)),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| herdmetric::Error::io(&path, e))?;
    }
    println!("wrote {}", dir.display());
    Ok(())
}
