//! Metric-learning and classification losses with analytic gradients.
//!
//! Distances are plain Euclidean throughout. Where a distance is zero its
//! gradient is taken as zero (the subgradient at the cone tip).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_same_len, dist, log_sum_exp, softmax};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Hinge margin for triplet and contrastive losses.
    pub margin: f64,
    /// Weight of the metric term in the softmax combinations.
    pub lambda: f64,
    /// Guard added to the anchor-negative distance in the reciprocal loss.
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            lambda: 0.01,
            epsilon: 1e-8,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) || !(self.lambda >= 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "loss config needs margin > 0, lambda >= 0, epsilon > 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Contrastive,
    #[serde(rename = "tl")]
    Triplet,
    #[serde(rename = "rtl")]
    ReciprocalTriplet,
    /// Cross-entropy alone; the closed-set baseline.
    Softmax,
    #[serde(rename = "softmax-tl")]
    SoftmaxTriplet,
    #[serde(rename = "softmax-rtl")]
    SoftmaxReciprocalTriplet,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Contrastive,
        LossKind::Triplet,
        LossKind::ReciprocalTriplet,
        LossKind::Softmax,
        LossKind::SoftmaxTriplet,
        LossKind::SoftmaxReciprocalTriplet,
    ];

    /// The five rows of the accuracy-vs-openness table.
    pub const SWEEP: [LossKind; 5] = [
        LossKind::Softmax,
        LossKind::Triplet,
        LossKind::ReciprocalTriplet,
        LossKind::SoftmaxTriplet,
        LossKind::SoftmaxReciprocalTriplet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Contrastive => "contrastive",
            LossKind::Triplet => "tl",
            LossKind::ReciprocalTriplet => "rtl",
            LossKind::Softmax => "softmax",
            LossKind::SoftmaxTriplet => "softmax-tl",
            LossKind::SoftmaxReciprocalTriplet => "softmax-rtl",
        }
    }

    pub fn uses_softmax(self) -> bool {
        matches!(
            self,
            LossKind::Softmax | LossKind::SoftmaxTriplet | LossKind::SoftmaxReciprocalTriplet
        )
    }

    /// Batch-hard metric term, if any.
    pub fn metric_base(self) -> Option<MetricBase> {
        match self {
            LossKind::Triplet | LossKind::SoftmaxTriplet => Some(MetricBase::Triplet),
            LossKind::ReciprocalTriplet | LossKind::SoftmaxReciprocalTriplet => {
                Some(MetricBase::Reciprocal)
            }
            LossKind::Contrastive | LossKind::Softmax => None,
        }
    }

    /// Momentum destabilizes the reciprocal family, so it is switched off there.
    pub fn momentum_allowed(self) -> bool {
        self.metric_base() != Some(MetricBase::Reciprocal)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "contrastive" => LossKind::Contrastive,
            "tl" | "triplet" => LossKind::Triplet,
            "rtl" | "reciprocal" => LossKind::ReciprocalTriplet,
            "softmax" | "baseline" => LossKind::Softmax,
            "softmax-tl" => LossKind::SoftmaxTriplet,
            "softmax-rtl" => LossKind::SoftmaxReciprocalTriplet,
            other => {
                let valid: Vec<&str> = LossKind::ALL.iter().map(|k| k.as_str()).collect();
                return Err(Error::Config(format!(
                    "unknown loss kind {other:?}; valid kinds: {}",
                    valid.join(", ")
                )));
            }
        };
        Ok(kind)
    }
}

/// Metric term used on batch-hard selections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricBase {
    Triplet,
    Reciprocal,
}

/// Pair label for the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairLabel {
    Similar,
    Dissimilar,
}

/// Gradient of `|a - b|` with respect to `a`; zero at coincidence.
fn unit_diff(a: &[f64], b: &[f64], d: f64) -> Vec<f64> {
    if d > 0.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) / d).collect()
    } else {
        vec![0.0; a.len()]
    }
}

/// `(1-Y)/2 * d + Y/2 * max(0, margin - d)`, linear in `d` for similar pairs.
pub fn contrastive(x1: &[f64], x2: &[f64], label: PairLabel, cfg: &LossConfig) -> Result<f64> {
    check_same_len(x1, x2)?;
    Ok(contrastive_from_distance(dist(x1, x2), label, cfg).0)
}

/// Value and derivative with respect to the distance.
pub fn contrastive_from_distance(d: f64, label: PairLabel, cfg: &LossConfig) -> (f64, f64) {
    match label {
        PairLabel::Similar => (0.5 * d, 0.5),
        PairLabel::Dissimilar => {
            if cfg.margin - d > 0.0 {
                (0.5 * (cfg.margin - d), -0.5)
            } else {
                (0.0, 0.0)
            }
        }
    }
}

pub fn contrastive_grad(
    x1: &[f64],
    x2: &[f64],
    label: PairLabel,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_same_len(x1, x2)?;
    let d = dist(x1, x2);
    let (value, dd) = contrastive_from_distance(d, label, cfg);
    let g1: Vec<f64> = unit_diff(x1, x2, d).into_iter().map(|u| dd * u).collect();
    let g2 = g1.iter().map(|g| -g).collect();
    Ok((value, g1, g2))
}

/// `max(0, d_ap - d_an + margin)` with its partial derivatives in `(d_ap, d_an)`.
pub fn triplet_from_distances(d_ap: f64, d_an: f64, cfg: &LossConfig) -> (f64, f64, f64) {
    let z = d_ap - d_an + cfg.margin;
    if z > 0.0 {
        (z, 1.0, -1.0)
    } else {
        (0.0, 0.0, 0.0)
    }
}

/// `d_ap + 1 / (d_an + epsilon)` with its partial derivatives.
pub fn reciprocal_from_distances(d_ap: f64, d_an: f64, cfg: &LossConfig) -> (f64, f64, f64) {
    let denom = d_an + cfg.epsilon;
    (d_ap + 1.0 / denom, 1.0, -1.0 / (denom * denom))
}

pub fn metric_from_distances(
    base: MetricBase,
    d_ap: f64,
    d_an: f64,
    cfg: &LossConfig,
) -> (f64, f64, f64) {
    match base {
        MetricBase::Triplet => triplet_from_distances(d_ap, d_an, cfg),
        MetricBase::Reciprocal => reciprocal_from_distances(d_ap, d_an, cfg),
    }
}

pub fn triplet(xa: &[f64], xp: &[f64], xn: &[f64], cfg: &LossConfig) -> Result<f64> {
    check_same_len(xa, xp)?;
    check_same_len(xa, xn)?;
    Ok(triplet_from_distances(dist(xa, xp), dist(xa, xn), cfg).0)
}

pub fn reciprocal_triplet(xa: &[f64], xp: &[f64], xn: &[f64], cfg: &LossConfig) -> Result<f64> {
    check_same_len(xa, xp)?;
    check_same_len(xa, xn)?;
    Ok(reciprocal_from_distances(dist(xa, xp), dist(xa, xn), cfg).0)
}

/// Gradients of a triplet-form loss with respect to anchor, positive and negative.
pub struct TripletGrad {
    pub value: f64,
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

pub fn metric_triplet_grad(
    base: MetricBase,
    xa: &[f64],
    xp: &[f64],
    xn: &[f64],
    cfg: &LossConfig,
) -> Result<TripletGrad> {
    check_same_len(xa, xp)?;
    check_same_len(xa, xn)?;
    let d_ap = dist(xa, xp);
    let d_an = dist(xa, xn);
    let (value, g_ap, g_an) = metric_from_distances(base, d_ap, d_an, cfg);
    let u_ap = unit_diff(xa, xp, d_ap);
    let u_an = unit_diff(xa, xn, d_an);
    let anchor = u_ap
        .iter()
        .zip(&u_an)
        .map(|(p, n)| g_ap * p + g_an * n)
        .collect();
    let positive = u_ap.iter().map(|p| -g_ap * p).collect();
    let negative = u_an.iter().map(|n| -g_an * n).collect();
    Ok(TripletGrad {
        value,
        anchor,
        positive,
        negative,
    })
}

/// `-log softmax(logits)[class_index]`.
pub fn softmax_ce(logits: &[f64], class_index: usize) -> Result<f64> {
    if class_index >= logits.len() {
        return Err(Error::Dimension(format!(
            "class index {class_index} out of range for {} logits",
            logits.len()
        )));
    }
    Ok(log_sum_exp(logits) - logits[class_index])
}

/// Value and gradient `softmax(logits) - onehot(class_index)`.
pub fn softmax_ce_grad(logits: &[f64], class_index: usize) -> Result<(f64, Vec<f64>)> {
    let value = softmax_ce(logits, class_index)?;
    let mut grad = softmax(logits)?;
    grad[class_index] -= 1.0;
    Ok((value, grad))
}

/// `softmax_value + lambda * metric_value`.
pub fn combined(softmax_value: f64, metric_value: f64, cfg: &LossConfig) -> f64 {
    softmax_value + cfg.lambda * metric_value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;
    use proptest::prelude::*;

    fn cfg() -> LossConfig {
        LossConfig::default()
    }

    fn at_distance(d: f64, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[0] = d;
        v
    }

    #[test]
    fn contrastive_examples() {
        let x = [0.3, -0.2, 1.0];
        assert_eq!(contrastive(&x, &x, PairLabel::Similar, &cfg()).unwrap(), 0.0);
        let far = [x[0] + 1.5, x[1], x[2]];
        assert_eq!(contrastive(&x, &far, PairLabel::Dissimilar, &cfg()).unwrap(), 0.0);
        let zero = [0.0, 0.0];
        let two = [0.0, 2.0];
        assert_eq!(contrastive(&zero, &two, PairLabel::Similar, &cfg()).unwrap(), 1.0);
        let half = [0.5, 0.0];
        assert_eq!(contrastive(&zero, &half, PairLabel::Dissimilar, &cfg()).unwrap(), 0.25);
        assert!(contrastive(&zero, &x, PairLabel::Similar, &cfg()).is_err());
    }

    #[test]
    fn triplet_examples() {
        let a = [0.0, 0.0];
        assert_eq!(triplet(&a, &[1.0, 0.0], &[0.0, 2.0], &cfg()).unwrap(), 0.0);
        assert_eq!(triplet(&a, &[1.0, 0.0], &[0.0, 1.5], &cfg()).unwrap(), 0.5);
        assert_eq!(triplet(&a, &a, &[3.0, 4.0], &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn reciprocal_examples() {
        let a = [0.0, 0.0];
        let v = reciprocal_triplet(&a, &[1.0, 0.0], &[0.0, 2.0], &cfg()).unwrap();
        assert!((v - 1.5).abs() < 1e-7);
        let far = reciprocal_triplet(&a, &a, &[1e12, 0.0], &cfg()).unwrap();
        assert!(far < 1e-11);
        let guarded = reciprocal_triplet(&a, &[2.0, 0.0], &a, &cfg()).unwrap();
        assert!(guarded.is_finite());
        assert!((guarded - (2.0 + 1e8)).abs() < 1e-6);
    }

    #[test]
    fn softmax_ce_examples() {
        assert!((softmax_ce(&[0.0, 0.0], 0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(softmax_ce(&[100.0, 0.0, 0.0], 0).unwrap() < 1e-40);
        for c in 2..7 {
            let v = softmax_ce(&vec![0.3; c], 1).unwrap();
            assert!((v - (c as f64).ln()).abs() < 1e-12);
        }
        assert!(matches!(softmax_ce(&[0.0], 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn combined_examples() {
        let zero_lambda = LossConfig {
            lambda: 0.0,
            ..cfg()
        };
        assert_eq!(combined(0.6931, 1.5, &zero_lambda), 0.6931);
        assert!((combined(0.6931, 1.5, &cfg()) - 0.7081).abs() < 1e-12);
        assert_eq!(combined(0.6931, 0.0, &cfg()), 0.6931);
    }

    #[test]
    fn loss_kind_names_round_trip() {
        for kind in LossKind::ALL {
            assert_eq!(kind.as_str().parse::<LossKind>().unwrap(), kind);
        }
        let err = "hinge".parse::<LossKind>().unwrap_err().to_string();
        assert!(err.contains("softmax-rtl"));
        assert!(!LossKind::ReciprocalTriplet.momentum_allowed());
        assert!(!LossKind::SoftmaxReciprocalTriplet.momentum_allowed());
        assert!(LossKind::SoftmaxTriplet.momentum_allowed());
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut plus = x.to_vec();
                let mut minus = x.to_vec();
                plus[i] += h;
                minus[i] -= h;
                (f(&plus) - f(&minus)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_close(analytic: &[f64], numeric: &[f64]) {
        for (a, n) in analytic.iter().zip(numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel <= 1e-4, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = Rng::new(17);
        let c = cfg();
        let mut checked = 0;
        while checked < 50 {
            let v = |rng: &mut Rng| (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect::<Vec<f64>>();
            let (xa, xp, xn) = (v(&mut rng), v(&mut rng), v(&mut rng));
            let z = dist(&xa, &xp) - dist(&xa, &xn) + c.margin;
            if z.abs() < 1e-3 || dist(&xa, &xn) < 1e-3 {
                continue;
            }
            for base in [MetricBase::Triplet, MetricBase::Reciprocal] {
                let g = metric_triplet_grad(base, &xa, &xp, &xn, &c).unwrap();
                let f = |a: &[f64], p: &[f64], n: &[f64]| {
                    metric_from_distances(base, dist(a, p), dist(a, n), &c).0
                };
                assert_close(&g.anchor, &central_diff(|a| f(a, &xp, &xn), &xa, 1e-5));
                assert_close(&g.positive, &central_diff(|p| f(&xa, p, &xn), &xp, 1e-5));
                assert_close(&g.negative, &central_diff(|n| f(&xa, &xp, n), &xn, 1e-5));
            }
            for label in [PairLabel::Similar, PairLabel::Dissimilar] {
                if (dist(&xa, &xp) - c.margin).abs() < 1e-3 {
                    continue;
                }
                let (_, g1, g2) = contrastive_grad(&xa, &xp, label, &c).unwrap();
                let f = |a: &[f64], b: &[f64]| contrastive(a, b, label, &c).unwrap();
                assert_close(&g1, &central_diff(|a| f(a, &xp), &xa, 1e-5));
                assert_close(&g2, &central_diff(|b| f(&xa, b), &xp, 1e-5));
            }
            let class = rng.below(5);
            let (_, g) = softmax_ce_grad(&xa, class).unwrap();
            assert_close(&g, &central_diff(|l| softmax_ce(l, class).unwrap(), &xa, 1e-5));
            checked += 1;
        }
    }

    #[test]
    fn reciprocal_is_monotone_on_distance_grid() {
        let c = cfg();
        let grid: Vec<f64> = (1..40).map(|i| i as f64 * 0.25).collect();
        for &d_ap in &grid {
            for w in grid.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                assert!(reciprocal_from_distances(d_ap, hi, &c).0 < reciprocal_from_distances(d_ap, lo, &c).0);
                assert!(reciprocal_from_distances(hi, d_ap, &c).0 > reciprocal_from_distances(lo, d_ap, &c).0);
            }
        }
    }

    proptest! {
        #[test]
        fn losses_are_non_negative(
            xa in prop::collection::vec(-5.0f64..5.0, 4),
            xp in prop::collection::vec(-5.0f64..5.0, 4),
            xn in prop::collection::vec(-5.0f64..5.0, 4),
            class in 0usize..4,
        ) {
            let c = cfg();
            prop_assert!(triplet(&xa, &xp, &xn, &c).unwrap() >= 0.0);
            prop_assert!(reciprocal_triplet(&xa, &xp, &xn, &c).unwrap() >= 0.0);
            prop_assert!(contrastive(&xa, &xp, PairLabel::Similar, &c).unwrap() >= 0.0);
            prop_assert!(contrastive(&xa, &xp, PairLabel::Dissimilar, &c).unwrap() >= 0.0);
            prop_assert!(softmax_ce(&xa, class).unwrap() >= 0.0);
        }

        #[test]
        fn triplet_is_translation_invariant(
            xa in prop::collection::vec(-5.0f64..5.0, 3),
            xp in prop::collection::vec(-5.0f64..5.0, 3),
            xn in prop::collection::vec(-5.0f64..5.0, 3),
            shift in prop::collection::vec(-4.0f64..4.0, 3),
        ) {
            // Dyadic shifts keep every coordinate difference exact.
            let s: Vec<f64> = shift.iter().map(|v| (v * 8.0).round() / 8.0).collect();
            let q = |x: &[f64]| x.iter().map(|v| (v * 1024.0).round() / 1024.0).collect::<Vec<f64>>();
            let (a, p, n) = (q(&xa), q(&xp), q(&xn));
            let add = |x: &[f64]| x.iter().zip(&s).map(|(a, b)| a + b).collect::<Vec<f64>>();
            let c = cfg();
            prop_assert_eq!(
                triplet(&a, &p, &n, &c).unwrap(),
                triplet(&add(&a), &add(&p), &add(&n), &c).unwrap()
            );
        }

        #[test]
        fn combined_is_within_lambda_metric_of_softmax(s in 0.0f64..10.0, m in 0.0f64..10.0) {
            let c = cfg();
            let v = combined(s, m, &c);
            prop_assert!((v - s - c.lambda * m).abs() <= 1e-12);
        }

        #[test]
        fn triplet_distance_form_matches_vectors(d_ap in 0.0f64..3.0, d_an in 0.0f64..3.0) {
            let c = cfg();
            let a = at_distance(0.0, 2);
            let p = at_distance(d_ap, 2);
            let n = vec![0.0, d_an];
            prop_assert!((triplet(&a, &p, &n, &c).unwrap() - triplet_from_distances(d_ap, d_an, &c).0).abs() < 1e-12);
        }
    }
}
