//! Batch-hard mining on a small 2-D batch, checked against exhaustive search.

use herdmetric::losses::{LossConfig, MetricBase};
use herdmetric::mining::{batch_all_loss, batch_hard_loss, brute_force_hard, TripletBatch};

fn main() -> herdmetric::Result<()> {
    // Three identities, two views each.
    let embeddings = vec![
        vec![0.0, 0.0],
        vec![0.0, 1.0],
        vec![2.0, 0.0],
        vec![2.5, 0.5],
        vec![0.5, 3.0],
        vec![1.0, 3.5],
    ];
    let labels = vec![1, 1, 2, 2, 3, 3];
    let batch = TripletBatch::new(embeddings, labels)?;
    let cfg = LossConfig::default();

    let out = batch_hard_loss(&batch, &cfg, MetricBase::Triplet)?;
    for (a, (s, l)) in out.selections.iter().zip(&out.anchor_losses).enumerate() {
        println!("anchor {a}: positive {} negative {} loss {l:.4}", s.positive, s.negative);
    }
    println!("batch-hard triplet {:.4}", out.loss);
    println!(
        "batch-hard reciprocal {:.4}",
        batch_hard_loss(&batch, &cfg, MetricBase::Reciprocal)?.loss
    );
    println!("batch-all triplet {:.4}", batch_all_loss(&batch, &cfg, MetricBase::Triplet)?);
    assert_eq!(out.selections, brute_force_hard(&batch)?);
    println!("selections match exhaustive search");
    Ok(())
}
