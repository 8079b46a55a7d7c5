//! Sample-quality measurements and an exact rejection sampler for the
//! obstacle-constrained Gaussian mixture.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obstacle::ObstacleSet;
use crate::target::{AxisBox, GaussianMixture};

/// Summary of one sampler run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub feasibility_rate: f64,
    pub mode_occupancy: Vec<f64>,
    pub boundary_fraction: f64,
    /// Row-major `bins × bins` masses over the declared box.
    pub histogram: Vec<f64>,
}

impl SampleStats {
    pub fn compute(
        samples: &[Vec<f64>],
        obstacles: &ObstacleSet,
        means: &[Vec<f64>],
        assign_radius: f64,
        delta: f64,
        hist_box: &AxisBox,
        bins: usize,
    ) -> Result<Self> {
        Ok(SampleStats {
            feasibility_rate: feasibility_rate(samples, obstacles),
            mode_occupancy: mode_occupancy(samples, means, assign_radius)?,
            boundary_fraction: boundary_fraction(samples, obstacles, delta)?,
            histogram: histogram2d(samples, hist_box, bins)?,
        })
    }
}

/// Fraction of samples outside every obstacle. An empty list scores 1.
pub fn feasibility_rate(samples: &[Vec<f64>], obstacles: &ObstacleSet) -> f64 {
    if samples.is_empty() {
        return 1.0;
    }
    samples.iter().filter(|s| obstacles.is_feasible(s)).count() as f64 / samples.len() as f64
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Index of the nearest mean, ties broken towards the lower index.
fn nearest(x: &[f64], means: &[Vec<f64>]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, m) in means.iter().enumerate() {
        let d = dist(x, m);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    best
}

/// Fraction of samples assigned to each mean: nearest mean, and only if it
/// lies within `assign_radius`.
pub fn mode_occupancy(
    samples: &[Vec<f64>],
    means: &[Vec<f64>],
    assign_radius: f64,
) -> Result<Vec<f64>> {
    if !(assign_radius > 0.0) {
        return Err(Error::InvalidArgument("assign_radius must be positive".into()));
    }
    let mut counts = vec![0usize; means.len()];
    for s in samples {
        if let Some((k, d)) = nearest(s, means) {
            if d <= assign_radius {
                counts[k] += 1;
            }
        }
    }
    let n = samples.len().max(1) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Mean Euclidean distance from each sample to its nearest mean.
pub fn mean_distance_to_nearest_mode(samples: &[Vec<f64>], means: &[Vec<f64>]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter_map(|s| nearest(s, means)).map(|(_, d)| d).sum::<f64>()
        / samples.len() as f64
}

/// Fraction of samples within `delta` of some obstacle boundary. Spheres and
/// cylinders only.
pub fn boundary_fraction(samples: &[Vec<f64>], obstacles: &ObstacleSet, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for s in samples {
        if let Some(d) = obstacles.nearest_boundary_distance(s)? {
            if d <= delta {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// `n` exact draws from the mixture restricted to the free space.
pub fn rejection_oracle<R: Rng + ?Sized>(
    gmm: &GaussianMixture,
    obstacles: &ObstacleSet,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let budget = n.saturating_mul(100);
    let mut out = Vec::with_capacity(n);
    let mut proposals = 0usize;
    while out.len() < n {
        if proposals >= budget {
            return Err(Error::DegenerateConstraint { proposals, requested: n });
        }
        proposals += 1;
        let x = gmm.sample(rng);
        if obstacles.is_feasible(&x) {
            out.push(x);
        }
    }
    Ok(out)
}

/// Normalized `bins × bins` histogram of the first two coordinates over
/// `hist_box`; samples outside the box are dropped.
pub fn histogram2d(samples: &[Vec<f64>], hist_box: &AxisBox, bins: usize) -> Result<Vec<f64>> {
    if hist_box.dim() != 2 {
        return Err(Error::InvalidArgument("histograms are two-dimensional".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let mut h = vec![0.0; bins * bins];
    let mut total = 0usize;
    let w0 = (hist_box.hi[0] - hist_box.lo[0]) / bins as f64;
    let w1 = (hist_box.hi[1] - hist_box.lo[1]) / bins as f64;
    for s in samples {
        if s.len() < 2 || !hist_box.contains(&s[..2]) {
            continue;
        }
        let i = (((s[0] - hist_box.lo[0]) / w0) as usize).min(bins - 1);
        let j = (((s[1] - hist_box.lo[1]) / w1) as usize).min(bins - 1);
        h[i * bins + j] += 1.0;
        total += 1;
    }
    if total > 0 {
        h.iter_mut().for_each(|v| *v /= total as f64);
    }
    Ok(h)
}

/// Total-variation distance between the two normalized histograms.
pub fn histogram_tv(
    samples_a: &[Vec<f64>],
    samples_b: &[Vec<f64>],
    hist_box: &AxisBox,
    bins: usize,
) -> Result<f64> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::InvalidArgument("histogram_tv needs non-empty sample sets".into()));
    }
    let a = histogram2d(samples_a, hist_box, bins)?;
    let b = histogram2d(samples_b, hist_box, bins)?;
    Ok(0.5 * a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obstacle::Obstacle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_spheres() -> ObstacleSet {
        ObstacleSet::new(vec![
            Obstacle::sphere(vec![-1.0, 1.0], 0.4).unwrap(),
            Obstacle::sphere(vec![-1.0, 0.1], 0.4).unwrap(),
        ])
        .unwrap()
    }

    fn hbox() -> AxisBox {
        AxisBox::cube(2, -6.0, 6.0).unwrap()
    }

    #[test]
    fn feasibility_examples() {
        let set = two_spheres();
        let mode = vec![-2.0, -1.0];
        let centre = vec![-1.0, 1.0];
        assert_eq!(feasibility_rate(&vec![mode.clone(); 10], &set), 1.0);
        assert_eq!(feasibility_rate(&vec![centre.clone(); 10], &set), 0.0);
        assert_eq!(feasibility_rate(&[mode, centre], &set), 0.5);
    }

    #[test]
    fn occupancy_examples() {
        let means = vec![vec![-2.0, -1.0], vec![0.9, 1.0]];
        assert_eq!(
            mode_occupancy(&vec![means[0].clone(); 5], &means, 2.0).unwrap(),
            vec![1.0, 0.0]
        );
        assert_eq!(mode_occupancy(&[vec![50.0, 50.0]], &means, 2.0).unwrap(), vec![0.0, 0.0]);
        // equidistant point goes to the lower index
        let tie = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        assert_eq!(mode_occupancy(&[vec![1.0, 0.0]], &tie, 2.0).unwrap(), vec![1.0, 0.0]);
        assert!(mode_occupancy(&[], &means, 0.0).is_err());
    }

    #[test]
    fn boundary_examples() {
        let set = two_spheres();
        assert_eq!(boundary_fraction(&[vec![-1.0, 1.4]], &set, 1e-9).unwrap(), 1.0);
        // 1.0 from both boundaries
        let far = vec![vec![-2.4, 1.0]];
        let d = set.nearest_boundary_distance(&far[0]).unwrap().unwrap();
        assert!(d > 0.9);
        assert_eq!(boundary_fraction(&far, &set, 0.05).unwrap(), 0.0);
        let e = ObstacleSet::new(vec![Obstacle::ellipsoid(
            vec![0.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap()])
        .unwrap();
        assert!(boundary_fraction(&[vec![3.0, 0.0]], &e, 0.1).is_err());
    }

    #[test]
    fn oracle_outputs_are_feasible() {
        let gmm = GaussianMixture::planar_benchmark();
        let set = two_spheres();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = rejection_oracle(&gmm, &set, 20_000, &mut rng).unwrap();
        assert_eq!(s.len(), 20_000);
        assert_eq!(feasibility_rate(&s, &set), 1.0);
    }

    #[test]
    fn oracle_guard_trips_on_covering_obstacle() {
        let gmm = GaussianMixture::planar_benchmark();
        let huge =
            ObstacleSet::new(vec![Obstacle::sphere(vec![0.0, 0.0], 100.0).unwrap()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            rejection_oracle(&gmm, &huge, 10, &mut rng),
            Err(Error::DegenerateConstraint { proposals: 1000, requested: 10 })
        ));
    }

    #[test]
    fn negligible_obstacle_accepts_almost_everything() {
        let gmm = GaussianMixture::planar_benchmark();
        let tiny =
            ObstacleSet::new(vec![Obstacle::sphere(vec![20.0, 20.0], 0.1).unwrap()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // every proposal accepted: output equals the raw mixture stream
        let n = 10_000;
        let s = rejection_oracle(&gmm, &tiny, n, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw: Vec<Vec<f64>> = (0..n).map(|_| gmm.sample(&mut rng)).collect();
        assert_eq!(s, raw);
    }

    #[test]
    fn tv_examples() {
        let a = vec![vec![0.1, 0.1], vec![-3.0, 2.0]];
        assert_eq!(histogram_tv(&a, &a, &hbox(), 20).unwrap(), 0.0);
        let b = vec![vec![5.0, 5.0]];
        assert_eq!(histogram_tv(&a, &b, &hbox(), 20).unwrap(), 1.0);
        assert!(histogram_tv(&a, &[], &hbox(), 20).is_err());
    }

    #[test]
    fn histogram_masses_sum_to_one() {
        let s = vec![vec![0.0, 0.0], vec![5.99, -5.99], vec![6.0, 6.0], vec![100.0, 0.0]];
        let h = histogram2d(&s, &hbox(), 20).unwrap();
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
