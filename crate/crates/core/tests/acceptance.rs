//! Acceptance suite. `acceptance_criteria` runs the desk-scale reproduction
//! (about a quarter of an hour on one core) and prints one line per
//! criterion; the other tests are independent oracles for the fast criteria.

use std::collections::BTreeMap;

use herdmetric::coatgen::Grid;
use herdmetric::embednet::{backward, ClassHead, EmbedNet, Model, NetConfig};
use herdmetric::linalg::Rng;
use herdmetric::losses::{LossConfig, LossKind, MetricBase};
use herdmetric::mining::batch_hard_loss;
use herdmetric::repro::{random_mining_batch, run_repro, ReproOptions};

const CRITERIA: [&str; 8] = [
    "gradients",
    "mining oracle",
    "detection math",
    "closed-set ceiling",
    "open-set superiority",
    "loss ordering",
    "determinism",
    "protocol fidelity",
];

#[test]
fn acceptance_criteria() {
    let out = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-repro");
    let _ = std::fs::remove_dir_all(&out);
    let report = run_repro(&ReproOptions {
        out: out.clone(),
        ..ReproOptions::default()
    })
    .expect("reproduction runs");

    assert_eq!(report.rows.len(), CRITERIA.len());
    let mut failed = Vec::new();
    for (i, name) in CRITERIA.iter().enumerate() {
        let row = report.row(name).expect("criterion reported");
        println!(
            "criterion {} {:<21} {}  measured: {}  bound: {}  ({:.1} s)",
            i + 1,
            name,
            if row.passed { "PASS" } else { "FAIL" },
            row.measured,
            row.bound,
            row.seconds
        );
        if !row.passed {
            failed.push(*name);
        }
    }
    println!("artifacts in {}", out.display());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

fn random_grid(rng: &mut Rng, side: usize) -> Grid {
    let mut g = Grid::filled(side, side, 0.0);
    g.data.iter_mut().for_each(|v| *v = rng.next_f64());
    g
}

/// Central differences at two step sizes; a coordinate counts only when both
/// agree, which rules out steps that cross a ReLU, hinge or selection change.
#[test]
fn finite_differences_agree_with_backward() {
    let mut rng = Rng::new(2024);
    let mut compared = 0usize;
    let mut worst = 0.0f64;
    for &kind in &LossKind::ALL {
        for trial in 0..3 {
            let config = NetConfig {
                input_size: 16,
                widths: [2, 3, 2],
                pool: 1 + trial % 2,
                embedding_dim: 6,
            };
            let net = EmbedNet::init(config, &mut rng);
            let labels: Vec<u32> = vec![4, 4, 9, 9, 2, 2];
            let head = kind
                .uses_softmax()
                .then(|| ClassHead::init(6, vec![2, 4, 9], &mut rng));
            let mut model = Model { net, head };
            let grids: Vec<Grid> = (0..labels.len()).map(|_| random_grid(&mut rng, 16)).collect();
            let inputs: Vec<&Grid> = grids.iter().collect();
            let cfg = LossConfig {
                margin: 0.5,
                lambda: 0.3,
                ..LossConfig::default()
            };
            let (_, grads) = backward(&model, &inputs, &labels, kind, &cfg).unwrap();

            let n_tensors = grads.len();
            for t in 0..n_tensors {
                let len = grads[t].data.len();
                for _ in 0..6 {
                    let i = rng.below(len);
                    let mut loss_at = |delta: f64| {
                        let original = model.tensors()[t].data[i];
                        model.tensors_mut()[t].data[i] = original + delta;
                        let v = backward(&model, &inputs, &labels, kind, &cfg).unwrap().0.total;
                        model.tensors_mut()[t].data[i] = original;
                        v
                    };
                    let fd = |h: f64, f: &mut dyn FnMut(f64) -> f64| (f(h) - f(-h)) / (2.0 * h);
                    let coarse = fd(1e-4, &mut loss_at);
                    let fine = fd(1e-5, &mut loss_at);
                    let scale = coarse.abs().max(fine.abs()).max(1e-6);
                    if (coarse - fine).abs() / scale > 1e-5 {
                        continue;
                    }
                    let analytic = grads[t].data[i];
                    worst = worst.max((analytic - fine).abs() / analytic.abs().max(fine.abs()).max(1e-6));
                    compared += 1;
                }
            }
        }
    }
    println!("finite-difference oracle: {compared} coordinates, worst relative error {worst:.2e}");
    assert!(compared > 300);
    assert!(worst <= 1e-4, "{worst}");
}

/// Hardest positive and negative found by explicit sorting of the distances.
fn sorted_hardest(embeddings: &[Vec<f64>], labels: &[u32], a: usize) -> (usize, usize) {
    let d = |j: usize| -> f64 {
        embeddings[a]
            .iter()
            .zip(&embeddings[j])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut pos: Vec<(f64, usize)> = Vec::new();
    let mut neg: Vec<(f64, usize)> = Vec::new();
    for j in 0..labels.len() {
        if j == a {
            continue;
        }
        if labels[j] == labels[a] {
            pos.push((-d(j), j));
        } else {
            neg.push((d(j), j));
        }
    }
    // Ties resolve to the lowest batch position.
    pos.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    neg.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    (pos[0].1, neg[0].1)
}

#[test]
fn batch_hard_selection_matches_sorting() {
    let mut rng = Rng::new(77);
    let cfg = LossConfig::default();
    let mut sizes = BTreeMap::new();
    for _ in 0..1000 {
        let batch = random_mining_batch(&mut rng).unwrap();
        *sizes.entry((batch.p, batch.k)).or_insert(0) += 1;
        let out = batch_hard_loss(&batch, &cfg, MetricBase::Triplet).unwrap();
        for (a, s) in out.selections.iter().enumerate() {
            assert_eq!(
                (s.positive, s.negative),
                sorted_hardest(&batch.embeddings, &batch.labels, a)
            );
        }
    }
    assert!(sizes.keys().all(|&(p, k)| (2..=8).contains(&p) && (2..=4).contains(&k)));
    assert_eq!(sizes.len(), 7 * 3, "every P x K shape drawn");
}
