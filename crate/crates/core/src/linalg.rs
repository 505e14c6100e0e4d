//! Small dense numerics shared by every other module: Euclidean distance,
//! stabilized softmax, a portable seeded generator and a 2-D PCA projection.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Euclidean distance `sqrt(sum (a_i - b_i)^2)`.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_same_len(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Distance without the length check, for inner loops that already validated shapes.
#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Dot product with four running sums, so the loop vectorizes without
/// reassociating a single accumulator.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Dimension("softmax of an empty vector".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `log(sum exp(x_i))`, stabilized.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Project points onto the two leading principal components of the
/// mean-centered set.
///
/// Components come from an eigendecomposition of the sample covariance,
/// ordered by decreasing eigenvalue. Each component's sign is fixed so that
/// its first loading with magnitude above `1e-12` is positive, which makes
/// the output a deterministic function of the input.
pub fn pca_project_2d(points: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    if points.len() < 2 {
        return Err(Error::Dimension(format!(
            "PCA needs at least 2 points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(Error::Dimension("PCA of zero-dimensional points".into()));
    }
    for p in points {
        check_same_len(&points[0], p)?;
    }
    let n = points.len();
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, dim, |i, j| points[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0).max(1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Vec::with_capacity(2);
    for &idx in order.iter().take(2) {
        let mut c: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        if let Some(first) = c.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
        }
        components.push(c);
    }
    // 1-D input: the second coordinate is identically zero.
    while components.len() < 2 {
        components.push(vec![0.0; dim]);
    }

    Ok((0..n)
        .map(|i| {
            let row = centered.row(i);
            let proj = |c: &[f64]| row.iter().zip(c).map(|(x, w)| x * w).sum::<f64>();
            (proj(&components[0]), proj(&components[1]))
        })
        .collect())
}

/// SplitMix64 generator.
///
/// State is a single `u64`. Each draw adds `0x9E3779B97F4A7C15` to the state
/// (wrapping) and returns the mixed value
/// `z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9; z = (z ^ (z >> 27)) * 0x94D049BB133111EB; z ^ (z >> 31)`.
/// Derived quantities:
///
/// * `next_f64`: `(next_u64 >> 11) * 2^-53`, uniform in `[0, 1)`.
/// * `below(n)`: high 64 bits of the 128-bit product `next_u64 * n`.
/// * `normal`: Box-Muller on two fresh uniforms, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`.
///
/// Streams are therefore identical on every platform for a given seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed from a parent seed and a path of integer tags.
pub fn derive_seed(parent: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix64(parent ^ 0x6A09_E667_F3BC_C908), |acc, &t| {
        mix64(acc.wrapping_add(GOLDEN_GAMMA).wrapping_add(mix64(t)))
    })
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, state: seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates, from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `count` distinct indices from `0..n`, in draw order.
    pub fn sample_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use super::Rng;

    #[test]
    fn distance_examples() {
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(
            euclidean_distance(&[1.0, 2.0, 2.0], &[0.0, 0.0, 0.0]).unwrap(),
            3.0
        );
        assert!(matches!(
            euclidean_distance(&[1.0], &[1.0, 2.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        for c in [-3.0, 0.0, 7.5] {
            for p in softmax(&[c, c, c]).unwrap() {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn pca_identical_points_project_to_origin() {
        let pts = vec![vec![1.0, 2.0, 3.0]; 4];
        for (x, y) in pca_project_2d(&pts).unwrap() {
            assert_eq!((x, y), (0.0, 0.0));
        }
    }

    #[test]
    fn pca_collinear_points_have_zero_second_coordinate() {
        // Line through p0 with direction dir, rank-1 covariance.
        let p0 = [1.0, -2.0, 0.5, 3.0, 0.0];
        let dir = [0.3, 0.1, -0.7, 0.2, 0.5];
        let pts: Vec<Vec<f64>> = [-1.0, 0.5, 2.0]
            .iter()
            .map(|t| p0.iter().zip(dir).map(|(p, d)| p + t * d).collect())
            .collect();
        let proj = pca_project_2d(&pts).unwrap();
        for (_, y) in &proj {
            assert!(y.abs() < 1e-9, "{y}");
        }
        // First coordinate spacing equals distance along the line.
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        assert!(((proj[2].0 - proj[0].0).abs() - 3.0 * norm).abs() < 1e-9);
    }

    #[test]
    fn pca_axis_aligned_ellipse_is_recentred_copy() {
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let t = i as f64 * std::f64::consts::TAU / 12.0;
                vec![5.0 + 3.0 * t.cos(), -1.0 + 1.0 * t.sin()]
            })
            .collect();
        let proj = pca_project_2d(&pts).unwrap();
        for (p, (x, y)) in pts.iter().zip(&proj) {
            assert!(((p[0] - 5.0).abs() - x.abs()).abs() < 1e-9);
            assert!(((p[1] + 1.0).abs() - y.abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn pca_rejects_single_point() {
        assert!(pca_project_2d(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn rng_stream_is_reproducible() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        // Reference values of SplitMix64 seeded with 0.
        let mut z = Rng::new(0);
        assert_eq!(z.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(z.next_u64(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn sample_indices_are_distinct() {
        let mut rng = Rng::new(3);
        let mut s = rng.sample_indices(10, 10);
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn triangle_inequality(
            a in prop::collection::vec(-10.0f64..10.0, 6),
            b in prop::collection::vec(-10.0f64..10.0, 6),
            c in prop::collection::vec(-10.0f64..10.0, 6),
        ) {
            let ab = euclidean_distance(&a, &b).unwrap();
            let bc = euclidean_distance(&b, &c).unwrap();
            let ac = euclidean_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert_eq!(ab, euclidean_distance(&b, &a).unwrap());
        }

        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            logits in prop::collection::vec(-50.0f64..50.0, 1..12),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&logits).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-9);
                prop_assert!(*a > 0.0);
            }
        }

        #[test]
        fn pca_preserves_distances_of_planar_data(
            coords in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..10),
            angle in 0.0f64..6.28,
        ) {
            // Embed 2-D points in 4-D through an orthonormal pair.
            let (s, c) = angle.sin_cos();
            let e1 = [c, s, 0.0, 0.0];
            let e2 = [0.0, 0.0, s, c];
            let pts: Vec<Vec<f64>> = coords
                .iter()
                .map(|(x, y)| (0..4).map(|i| 2.0 + x * e1[i] + y * e2[i]).collect())
                .collect();
            let proj = pca_project_2d(&pts).unwrap();
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    let d_in = euclidean_distance(&pts[i], &pts[j]).unwrap();
                    let d_out = ((proj[i].0 - proj[j].0).powi(2) + (proj[i].1 - proj[j].1).powi(2)).sqrt();
                    prop_assert!((d_in - d_out).abs() <= 1e-6);
                }
            }
        }
    }
}
