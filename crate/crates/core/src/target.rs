//! Target distributions exposed through their score and, optionally, their
//! log-density.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A distribution known through `∇ log p` and, when available, `log p`.
pub trait TargetModel: Sync {
    fn dim(&self) -> usize;

    /// Writes `∇ₓ log p(x)` into `out`.
    fn score_into(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.score_into(x, &mut out)?;
        Ok(out)
    }

    fn has_log_density(&self) -> bool {
        false
    }

    fn log_density(&self, _x: &[f64]) -> Result<f64> {
        Err(Error::Unsupported("target does not expose a log-density".into()))
    }
}

/// Axis-aligned box `[lo, hi]` in state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument("box requires lo < hi on every axis".into()));
        }
        Ok(AxisBox { lo, hi })
    }

    /// The square `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// Cell centres of a regular grid with `per_axis` cells along each axis.
    pub fn grid_centres(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|k| {
                        let i = idx % per_axis;
                        idx /= per_axis;
                        let w = (self.hi[k] - self.lo[k]) / per_axis as f64;
                        self.lo[k] + (i as f64 + 0.5) * w
                    })
                    .collect()
            })
            .collect()
    }
}

/// Finite mixture of multivariate Gaussians.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<Vec<f64>>>,
    // row-major d×d blocks
    precisions: Vec<Vec<f64>>,
    cholesky: Vec<Vec<f64>>,
    log_norms: Vec<f64>,
}

/// Serializable parameter record for a [`GaussianMixture`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major covariance matrices.
    pub covariances: Vec<Vec<Vec<f64>>>,
}

impl GmmSpec {
    pub fn build(&self) -> Result<GaussianMixture> {
        GaussianMixture::new(self.weights.clone(), self.means.clone(), self.covariances.clone())
    }
}

impl GaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::InvalidArgument(format!(
                "{} weights, {} means, {} covariances",
                k,
                means.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}, not 1")));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::InvalidArgument("zero-dimensional mixture".into()));
        }
        let mut precisions = Vec::with_capacity(k);
        let mut cholesky = Vec::with_capacity(k);
        let mut log_norms = Vec::with_capacity(k);
        for (c, (mean, cov)) in means.iter().zip(&covariances).enumerate() {
            check_dim(dim, mean.len())?;
            if cov.len() != dim || cov.iter().any(|r| r.len() != dim) {
                return Err(Error::InvalidArgument(format!("covariance {c} is not {dim}x{dim}")));
            }
            let m = DMatrix::from_fn(dim, dim, |i, j| cov[i][j]);
            if (0..dim).any(|i| (0..i).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12)) {
                return Err(Error::InvalidArgument(format!("covariance {c} is not symmetric")));
            }
            let chol = m.cholesky().ok_or_else(|| {
                Error::InvalidArgument(format!("covariance {c} is not positive definite"))
            })?;
            let l = chol.l();
            let log_det: f64 = 2.0 * (0..dim).map(|i| l[(i, i)].ln()).sum::<f64>();
            let p = chol.inverse();
            precisions.push((0..dim * dim).map(|idx| p[(idx / dim, idx % dim)]).collect());
            cholesky.push((0..dim * dim).map(|idx| l[(idx / dim, idx % dim)]).collect());
            log_norms.push(weights[c].ln() - 0.5 * log_det - 0.5 * dim as f64 * (2.0 * PI).ln());
        }
        Ok(GaussianMixture { dim, weights, means, covariances, precisions, cholesky, log_norms })
    }

    /// The two-component mixture of the planar benchmark.
    pub fn planar_benchmark() -> Self {
        GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![-2.0, -1.0], vec![0.9, 1.0]],
            vec![vec![vec![2.0, 1.0], vec![1.0, 2.0]], vec![vec![0.5, -0.25], vec![-0.25, 0.5]]],
        )
        .expect("benchmark mixture is valid")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[Vec<Vec<f64>>] {
        &self.covariances
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn spec(&self) -> GmmSpec {
        GmmSpec {
            weights: self.weights.clone(),
            means: self.means.clone(),
            covariances: self.covariances.clone(),
        }
    }

    /// `Σₖ wₖ μₖ`.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for (a, b) in m.iter_mut().zip(mu) {
                *a += w * b;
            }
        }
        m
    }

    /// Per-component log of `wₖ 𝒩(x; μₖ, Σₖ)`.
    fn component_logs(&self, x: &[f64], buf: &mut [f64]) -> Vec<f64> {
        let d = self.dim;
        let mut logs = Vec::with_capacity(self.weights.len());
        for (k, mu) in self.means.iter().enumerate() {
            for (b, (a, m)) in buf.iter_mut().zip(x.iter().zip(mu)) {
                *b = a - m;
            }
            let p = &self.precisions[k];
            let mut quad = 0.0;
            for i in 0..d {
                let row = &p[i * d..(i + 1) * d];
                let pd: f64 = row.iter().zip(buf.iter()).map(|(a, b)| a * b).sum();
                quad += buf[i] * pd;
            }
            logs.push(self.log_norms[k] - 0.5 * quad);
        }
        logs
    }

    /// `log Σₖ wₖ 𝒩(x; μₖ, Σₖ)` via a max-shifted log-sum-exp.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let mut buf = vec![0.0; self.dim];
        Ok(log_sum_exp(&self.component_logs(x, &mut buf)))
    }

    /// `∇ₓ log p(x) = Σₖ rₖ(x) Σₖ⁻¹ (μₖ − x)` with log-space responsibilities.
    pub fn score_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, out.len())?;
        let d = self.dim;
        let mut buf = vec![0.0; d];
        let logs = self.component_logs(x, &mut buf);
        let lse = log_sum_exp(&logs);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, mu) in self.means.iter().enumerate() {
            let r = (logs[k] - lse).exp();
            if r == 0.0 {
                continue;
            }
            for (b, (m, a)) in buf.iter_mut().zip(mu.iter().zip(x)) {
                *b = m - a;
            }
            let p = &self.precisions[k];
            for i in 0..d {
                let row = &p[i * d..(i + 1) * d];
                out[i] += r * row.iter().zip(buf.iter()).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Ok(())
    }

    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.score_into(x, &mut out)?;
        Ok(out)
    }

    /// One exact draw: pick a component by weight, then `μ + L z`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let d = self.dim;
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let l = &self.cholesky[k];
        (0..d)
            .map(|i| self.means[k][i] + (0..=i).map(|j| l[i * d + j] * z[j]).sum::<f64>())
            .collect()
    }
}

impl TargetModel for GaussianMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        GaussianMixture::score_into(self, x, out)
    }

    fn has_log_density(&self) -> bool {
        true
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        GaussianMixture::log_density(self, x)
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|a| (a - m).exp()).sum::<f64>().ln()
}

/// `U(x) = −log p(x) + C`, the positive potential fed to the navigation
/// function. Counts evaluations where `U ≤ 0`.
pub struct PotentialView<'a> {
    target: &'a dyn TargetModel,
    offset: f64,
    nonpositive: AtomicU64,
}

impl<'a> PotentialView<'a> {
    pub fn new(target: &'a dyn TargetModel, offset: f64) -> Result<Self> {
        if !target.has_log_density() {
            return Err(Error::Unsupported(
                "potential requires a log-density; use the constant repulsion variant".into(),
            ));
        }
        Ok(PotentialView { target, offset, nonpositive: AtomicU64::new(0) })
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn target(&self) -> &'a dyn TargetModel {
        self.target
    }

    pub fn potential_value(&self, x: &[f64]) -> Result<f64> {
        let u = self.offset - self.target.log_density(x)?;
        if u <= 0.0 {
            self.nonpositive.fetch_add(1, Ordering::Relaxed);
        }
        Ok(u)
    }

    /// Number of evaluations so far that returned `U ≤ 0`.
    pub fn nonpositive_count(&self) -> u64 {
        self.nonpositive.load(Ordering::Relaxed)
    }
}

/// Picks `C = max(0, max log p over probes) + 1` from a regular grid of at
/// most `n_probe` cell centres in `probe_box`.
pub fn calibrate_offset(
    target: &dyn TargetModel,
    probe_box: &AxisBox,
    n_probe: usize,
) -> Result<f64> {
    if !target.has_log_density() {
        return Err(Error::Unsupported("offset calibration requires a log-density".into()));
    }
    check_dim(target.dim(), probe_box.dim())?;
    let d = probe_box.dim() as f64;
    let mut per_axis = (n_probe.max(1) as f64).powf(1.0 / d).floor().max(1.0) as usize;
    while per_axis > 1 && per_axis.pow(probe_box.dim() as u32) > n_probe {
        per_axis -= 1;
    }
    let mut best = f64::NEG_INFINITY;
    for p in probe_box.grid_centres(per_axis) {
        best = best.max(target.log_density(&p)?);
    }
    Ok(best.max(0.0) + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal() -> GaussianMixture {
        GaussianMixture::new(
            vec![1.0],
            vec![vec![0.0, 0.0]],
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
        )
        .unwrap()
    }

    /// Direct two-component density, no log-space tricks.
    fn direct_density(x: &[f64]) -> f64 {
        let comp = |m: [f64; 2], s: [[f64; 2]; 2]| {
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            let inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
            let d = [x[0] - m[0], x[1] - m[1]];
            let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1])
                + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
            (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
        };
        0.5 * comp([-2.0, -1.0], [[2.0, 1.0], [1.0, 2.0]])
            + 0.5 * comp([0.9, 1.0], [[0.5, -0.25], [-0.25, 0.5]])
    }

    #[test]
    fn standard_normal_values() {
        let g = std_normal();
        assert!((g.log_density(&[0.0, 0.0]).unwrap() + (2.0 * PI).ln()).abs() < 1e-12);
        assert_eq!(g.score(&[1.0, 0.0]).unwrap(), vec![-1.0, 0.0]);
    }

    #[test]
    fn mixture_matches_direct_formula() {
        let g = GaussianMixture::planar_benchmark();
        for x in [[-2.0, -1.0], [0.9, 1.0], [0.0, 0.0], [3.0, -4.0]] {
            let a = g.log_density(&x).unwrap();
            let b = direct_density(&x).ln();
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let g = GaussianMixture::planar_benchmark();
        let n = 401;
        let h = 16.0 / (n - 1) as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [-8.0 + i as f64 * h, -8.0 + j as f64 * h];
                let wi = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                let wj = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                total += wi * wj * g.log_density(&x).unwrap().exp();
            }
        }
        total *= h * h;
        assert!((total - 1.0).abs() < 0.01, "integral {total}");
    }

    #[test]
    fn score_vanishes_at_mode_of_single_component() {
        let g = GaussianMixture::new(
            vec![1.0],
            vec![vec![0.5, -1.5]],
            vec![vec![vec![2.0, 0.3], vec![0.3, 1.0]]],
        )
        .unwrap();
        let s = g.score(&[0.5, -1.5]).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn far_tail_score_is_finite() {
        let g = GaussianMixture::planar_benchmark();
        let s = g.score(&[300.0, -250.0]).unwrap();
        assert!(s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_mixtures_rejected() {
        let cov = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]];
        assert!(GaussianMixture::new(vec![0.9], vec![vec![0.0, 0.0]], cov.clone()).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0]], cov.clone()).is_err());
        let bad = vec![vec![vec![1.0, 2.0], vec![2.0, 1.0]]];
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0, 0.0]], bad).is_err());
        let g = std_normal();
        assert!(g.log_density(&[0.0]).is_err());
    }

    #[test]
    fn potential_view_offsets() {
        let g = std_normal();
        let v0 = PotentialView::new(&g, 0.0).unwrap();
        assert!((v0.potential_value(&[0.0, 0.0]).unwrap() - (2.0 * PI).ln()).abs() < 1e-12);
        let v5 = PotentialView::new(&g, 5.0).unwrap();
        assert!((v5.potential_value(&[0.0, 0.0]).unwrap() - 5.0 - (2.0 * PI).ln()).abs() < 1e-12);
        assert_eq!(v5.nonpositive_count(), 0);
        let neg = PotentialView::new(&g, -10.0).unwrap();
        assert!(neg.potential_value(&[0.0, 0.0]).unwrap() < 0.0);
        assert_eq!(neg.nonpositive_count(), 1);
    }

    struct ScoreOnly;
    impl TargetModel for ScoreOnly {
        fn dim(&self) -> usize {
            1
        }
        fn score_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
            out[0] = -x[0];
            Ok(())
        }
    }

    #[test]
    fn score_only_target_has_no_potential() {
        assert!(matches!(PotentialView::new(&ScoreOnly, 1.0), Err(Error::Unsupported(_))));
        let b = AxisBox::cube(1, -1.0, 1.0).unwrap();
        assert!(calibrate_offset(&ScoreOnly, &b, 10).is_err());
    }

    /// Density with peak 10 at the origin: log p(x) = ln 10 − x².
    struct Peaked;
    impl TargetModel for Peaked {
        fn dim(&self) -> usize {
            1
        }
        fn score_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
            out[0] = -2.0 * x[0];
            Ok(())
        }
        fn has_log_density(&self) -> bool {
            true
        }
        fn log_density(&self, x: &[f64]) -> Result<f64> {
            Ok(10f64.ln() - x[0] * x[0])
        }
    }

    #[test]
    fn calibrated_offsets() {
        let b = AxisBox::cube(2, -5.0, 5.0).unwrap();
        for n in [1, 9, 121] {
            assert_eq!(calibrate_offset(&std_normal(), &b, n).unwrap(), 1.0);
        }
        let c = calibrate_offset(&Peaked, &AxisBox::cube(1, -1.0, 1.0).unwrap(), 1).unwrap();
        assert!((c - (10f64.ln() + 1.0)).abs() < 1e-12);
        let g = GaussianMixture::planar_benchmark();
        let c = calibrate_offset(&g, &AxisBox::cube(2, -6.0, 6.0).unwrap(), 10_000).unwrap();
        assert_eq!(c, 1.0);
        let view = PotentialView::new(&g, c).unwrap();
        for p in AxisBox::cube(2, -6.0, 6.0).unwrap().grid_centres(100) {
            assert!(view.potential_value(&p).unwrap() > 0.0);
        }
        assert_eq!(view.nonpositive_count(), 0);
    }

    #[test]
    fn exact_draws_have_mixture_mean() {
        use rand::SeedableRng;
        let g = GaussianMixture::planar_benchmark();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut m = [0.0; 2];
        for _ in 0..n {
            let x = g.sample(&mut rng);
            m[0] += x[0] / n as f64;
            m[1] += x[1] / n as f64;
        }
        let want = g.mean();
        assert!((m[0] - want[0]).abs() < 0.03 && (m[1] - want[1]).abs() < 0.03, "{m:?}");
    }
}
