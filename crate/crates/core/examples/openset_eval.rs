//! Open-set kNN evaluation of a trained model against the closed-set baseline.

use herdmetric::coatgen::{generate_herd, identities, HerdConfig};
use herdmetric::dataset::{make_class_splits, make_openset_splits};
use herdmetric::embednet::TrainConfig;
use herdmetric::losses::LossKind;
use herdmetric::openset::train_and_evaluate;

fn main() -> herdmetric::Result<()> {
    let herd = generate_herd(&HerdConfig::new(8, 20, 11))?;
    let classes = make_class_splits(&herd, 11)?;
    let split = &make_openset_splits(&identities(&herd), &[0.5], 1, 11)?[0];
    let config = TrainConfig {
        epochs: 15,
        seed: 11,
        ..TrainConfig::default()
    };
    for kind in [LossKind::Softmax, LossKind::SoftmaxReciprocalTriplet] {
        let (_, r) = train_and_evaluate(&herd, split, &classes, kind, &config, None)?;
        println!(
            "{kind:<12} accuracy {:.3} (known queries {:.2}; errors on known {:.2}, unknown {:.2})",
            r.accuracy,
            r.known_query_fraction(),
            r.error_known_fraction,
            r.error_unknown_fraction
        );
    }
    Ok(())
}
