//! Train the embedding network on a tiny herd and print the epoch log.
//!
//! cargo run --release --example train_embedding -- softmax-rtl

use herdmetric::coatgen::{generate_herd, identities, HerdConfig};
use herdmetric::dataset::{make_class_splits, make_openset_splits};
use herdmetric::embednet::{epoch_log_csv, train, TrainConfig};
use herdmetric::losses::LossKind;

fn main() -> herdmetric::Result<()> {
    let kind: LossKind = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(LossKind::SoftmaxReciprocalTriplet);
    let herd = generate_herd(&HerdConfig::new(6, 20, 3))?;
    let classes = make_class_splits(&herd, 3)?;
    let split = &make_openset_splits(&identities(&herd), &[0.34], 1, 3)?[0];
    println!("known {:?}, unknown {:?}", split.known, split.unknown);

    let config = TrainConfig {
        epochs: 10,
        seed: 3,
        ..TrainConfig::default()
    };
    let outcome = train(&herd, split, &classes, kind, &config)?;
    print!("{}", epoch_log_csv(&outcome.log));
    println!(
        "{kind}: momentum {}, pocket kept epoch {} of {}, {} parameters",
        if outcome.momentum_enabled { "on" } else { "off" },
        outcome.best_epoch,
        config.epochs,
        outcome.model.parameter_count()
    );
    Ok(())
}
