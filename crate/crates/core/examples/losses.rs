//! The pairwise and triplet objectives on hand-made embeddings.

use herdmetric::losses::{
    combined, contrastive, reciprocal_triplet, softmax_ce, triplet, LossConfig, PairLabel,
};

fn main() -> herdmetric::Result<()> {
    let cfg = LossConfig::default();
    let anchor = [0.0, 0.0];
    let positive = [0.0, 0.5];

    println!("d(a,n)   triplet  reciprocal  contrastive(dissimilar)");
    for d in [0.25, 0.5, 1.0, 1.5, 2.0, 4.0] {
        let negative = [d, 0.0];
        println!(
            "{d:<8} {:<8.4} {:<11.4} {:.4}",
            triplet(&anchor, &positive, &negative, &cfg)?,
            reciprocal_triplet(&anchor, &positive, &negative, &cfg)?,
            contrastive(&anchor, &negative, PairLabel::Dissimilar, &cfg)?,
        );
    }

    let logits = [2.0, 0.5, -1.0];
    let ce = softmax_ce(&logits, 0)?;
    let rtl = reciprocal_triplet(&anchor, &positive, &[1.0, 0.0], &cfg)?;
    println!(
        "softmax {ce:.4} + {} * rtl {rtl:.4} = {:.4}",
        cfg.lambda,
        combined(ce, rtl, &cfg)
    );
    Ok(())
}
