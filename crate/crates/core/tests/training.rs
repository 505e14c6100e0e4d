use herdmetric::coatgen::{generate_herd, HerdConfig};
use herdmetric::dataset::{make_class_splits, OpenSetSplit};
use herdmetric::embednet::{train, TrainConfig};
use herdmetric::losses::LossKind;

/// Four identities, twenty instances, thirty epochs of softmax-rtl. Each class
/// has nine training and one validation instance, so validation accuracy moves
/// in steps of 0.25; the bound is twice chance on every seed.
#[test]
fn softmax_rtl_learns_a_four_identity_herd() {
    for seed in 1..=3 {
        let herd = generate_herd(&HerdConfig::new(4, 20, seed)).unwrap();
        let classes = make_class_splits(&herd, seed).unwrap();
        let split = OpenSetSplit::closed(0..4);
        let config = TrainConfig {
            epochs: 30,
            seed,
            ..TrainConfig::default()
        };
        let outcome =
            train(&herd, &split, &classes, LossKind::SoftmaxReciprocalTriplet, &config).unwrap();
        assert_eq!(outcome.log.len(), 30);
        assert!(!outcome.momentum_enabled);

        let best = outcome.log.iter().map(|l| l.val_accuracy).fold(0.0, f64::max);
        assert!(best >= 0.5, "seed {seed}: best validation accuracy {best}");
        let (first, last) = (outcome.log[0].train_loss, outcome.log[29].train_loss);
        assert!(last < 0.5 * first, "seed {seed}: loss {first} -> {last}");

        assert_eq!(*outcome.pocket_history.last().unwrap(), best);
        assert_eq!(outcome.log[outcome.best_epoch - 1].val_accuracy, best);
        assert!(outcome.pocket_history.windows(2).all(|w| w[0] <= w[1]));
    }
}
