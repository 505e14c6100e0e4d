//! Data-level properties of the synthetic herd, each checked against an
//! independent computation on the raw grids.

use herdmetric::coatgen::{
    augment_with_seed, generate_herd, gray_scott_simulate, CoatPattern, GrayScottParams, Grid,
    HerdConfig,
};
use herdmetric::linalg::Rng;

fn mad(a: &Grid, b: &Grid) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len() as f64
}

fn l2(a: &Grid, b: &Grid) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn pattern(seed: u64) -> CoatPattern {
    gray_scott_simulate(&GrayScottParams::default(), &mut Rng::new(seed)).unwrap()
}

#[test]
fn fifty_default_patterns_are_pairwise_distinct() {
    let patterns: Vec<CoatPattern> = (0..50).map(|s| pattern(1000 + s)).collect();
    let mut smallest = f64::INFINITY;
    for i in 0..patterns.len() {
        for j in i + 1..patterns.len() {
            smallest = smallest.min(mad(&patterns[i].grid, &patterns[j].grid));
        }
    }
    assert!(smallest > 0.05, "closest pair differs by {smallest}");
}

#[test]
fn augmentations_stay_closer_within_an_identity() {
    let a = pattern(1);
    let b = pattern(2);
    let views = |p: &CoatPattern, base: u64| -> Vec<Grid> {
        (0..20).map(|i| augment_with_seed(p, base + i).grid).collect()
    };
    let (va, vb) = (views(&a, 100), views(&b, 200));
    for v in va.iter().chain(&vb) {
        assert!(v.data.iter().all(|x| (0.0..=1.0).contains(x)));
    }
    let mean = |pairs: Vec<f64>| pairs.iter().sum::<f64>() / pairs.len() as f64;
    let mut intra = Vec::new();
    for set in [&va, &vb] {
        for i in 0..set.len() {
            for j in i + 1..set.len() {
                intra.push(l2(&set[i], &set[j]));
            }
        }
    }
    let inter = va.iter().flat_map(|x| vb.iter().map(move |y| l2(x, y))).collect();
    let (intra, inter) = (mean(intra), mean(inter));
    assert!(intra < inter, "intra {intra} vs inter {inter}");
}

#[test]
fn raw_grids_are_separable_by_nearest_neighbour() {
    // Default herd shape; one held-out instance per identity against the rest.
    let herd = generate_herd(&HerdConfig::new(46, 103, 7)).unwrap();
    let mut correct = 0;
    for id in 0..46u32 {
        let q = herd.iter().position(|i| i.identity_id == id).unwrap();
        let nearest = (0..herd.len())
            .filter(|&i| i != q)
            .map(|i| (l2(&herd[q].grid, &herd[i].grid), i))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
            .1;
        correct += usize::from(herd[nearest].identity_id == id);
    }
    let accuracy = correct as f64 / 46.0;
    assert!(accuracy > 0.9, "1-NN accuracy {accuracy}");
}
