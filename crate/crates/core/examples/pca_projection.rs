//! Project embeddings of a briefly trained network to 2-D and plot them.

use std::collections::BTreeSet;

use herdmetric::coatgen::{generate_herd, identities, HerdConfig};
use herdmetric::dataset::{make_class_splits, make_openset_splits};
use herdmetric::embednet::{train, TrainConfig};
use herdmetric::linalg::pca_project_2d;
use herdmetric::losses::LossKind;
use herdmetric::plot::scatter_svg;

fn main() -> herdmetric::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "embedding.svg".into());
    let herd = generate_herd(&HerdConfig::new(6, 20, 9))?;
    let classes = make_class_splits(&herd, 9)?;
    let split = &make_openset_splits(&identities(&herd), &[0.34], 1, 9)?[0];
    let config = TrainConfig {
        epochs: 8,
        ..TrainConfig::default()
    };
    let model = train(&herd, split, &classes, LossKind::SoftmaxReciprocalTriplet, &config)?.model;
    let embeddings = herd
        .iter()
        .map(|i| model.net.forward(i))
        .collect::<herdmetric::Result<Vec<_>>>()?;
    let points = pca_project_2d(&embeddings)?;
    let labels: Vec<u32> = herd.iter().map(|i| i.identity_id).collect();
    let unknown: BTreeSet<u32> = split.unknown.iter().copied().collect();
    let svg = scatter_svg("PCA of embeddings (hollow: unknown)", &points, &labels, &unknown);
    std::fs::write(&out, svg).map_err(|e| herdmetric::Error::io(&out, e))?;
    println!("wrote {out} ({} points)", points.len());
    Ok(())
}
