//! MIMO symbol detection with annealed Langevin detectors.
//!
//! The complex model `y = Hx + n` is handled in its real-valued lifting:
//! a state vector holds the real parts of all `n_u` symbols followed by
//! their imaginary parts, so symbol `i` lives on the coordinate pair
//! `(i, i + n_u)`.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::obstacle::{Obstacle, ObstacleSet};
use crate::sampler::{
    chain_rng, ChainCounters, Dynamics, Init, Repulsion, SamplerConfig, StepRule, Stepper,
};
use crate::target::{PotentialView, TargetModel};

/// Largest search space the exhaustive ML detector accepts.
pub const ML_MAX_CANDIDATES: u64 = 1 << 24;

/// Finite symbol alphabet in the complex plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    pub points: Vec<(f64, f64)>,
    /// Distinct real parts, used by the smoothed prior on real coordinates.
    pub levels_re: Vec<f64>,
    /// Distinct imaginary parts.
    pub levels_im: Vec<f64>,
}

impl Constellation {
    /// `{±0.74 ± j0.84}`.
    pub fn qpsk() -> Self {
        Self::from_points(vec![(0.74, 0.84), (0.74, -0.84), (-0.74, 0.84), (-0.74, -0.84)])
            .expect("qpsk is valid")
    }

    pub fn from_points(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty constellation".into()));
        }
        let distinct = |vals: Vec<f64>| {
            let mut v = vals;
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let levels_re = distinct(points.iter().map(|p| p.0).collect());
        let levels_im = distinct(points.iter().map(|p| p.1).collect());
        Ok(Constellation { points, levels_re, levels_im })
    }

    /// Mean symbol energy `E_s = mean |s|²`.
    pub fn symbol_energy(&self) -> f64 {
        self.points.iter().map(|(a, b)| a * a + b * b).sum::<f64>() / self.points.len() as f64
    }

    /// Smallest coordinate magnitude over all levels.
    pub fn min_level_magnitude(&self) -> f64 {
        self.levels_re.iter().chain(&self.levels_im).map(|v| v.abs()).fold(f64::INFINITY, f64::min)
    }

    /// Largest coordinate magnitude over all levels.
    pub fn max_level_magnitude(&self) -> f64 {
        self.levels_re.iter().chain(&self.levels_im).map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Index of the point nearest to `(re, im)`; ties go to the lower index.
    pub fn nearest(&self, re: f64, im: f64) -> usize {
        let mut best = (0, f64::INFINITY);
        for (k, (a, b)) in self.points.iter().enumerate() {
            let d = (re - a) * (re - a) + (im - b) * (im - b);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }

    /// Maps every coordinate pair of a lifted vector to its nearest point.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() / 2;
        let mut out = vec![0.0; x.len()];
        for i in 0..n {
            let (a, b) = self.points[self.nearest(x[i], x[i + n])];
            out[i] = a;
            out[i + n] = b;
        }
        out
    }
}

/// Complex `n_r × n_u` Rayleigh channel, entries `CN(0, 1/n_r)`.
pub fn gen_channel<R: Rng + ?Sized>(n_r: usize, n_u: usize, rng: &mut R) -> DMatrix<Complex<f64>> {
    let normal = Normal::new(0.0, (0.5 / n_r as f64).sqrt()).expect("valid std");
    DMatrix::from_fn(n_r, n_u, |_, _| Complex::new(normal.sample(rng), normal.sample(rng)))
}

/// Real block form `[[Re H, −Im H], [Im H, Re H]]` and `[Re v; Im v]`.
pub fn lift_real(
    h: &DMatrix<Complex<f64>>,
    v: &DVector<Complex<f64>>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_dim(h.ncols(), v.len())?;
    let hr = lift_matrix(h);
    Ok((hr, lift_vector(v)))
}

pub fn lift_matrix(h: &DMatrix<Complex<f64>>) -> DMatrix<f64> {
    let (m, n) = h.shape();
    DMatrix::from_fn(2 * m, 2 * n, |i, j| {
        let z = h[(i % m, j % n)];
        match (i < m, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

pub fn lift_vector(v: &DVector<Complex<f64>>) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Per-complex-dimension noise variance giving `snr_db`, using the
/// expectations `E‖Hx‖² = n_u E_s` and `E‖n‖² = n_r σ₀²`.
pub fn noise_variance_from_snr(
    n_u: usize,
    n_r: usize,
    constellation: &Constellation,
    snr_db: f64,
) -> f64 {
    n_u as f64 * constellation.symbol_energy() / (n_r as f64 * 10f64.powf(snr_db / 10.0))
}

/// One channel use in lifted real form.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoInstance {
    pub h_real: DMatrix<f64>,
    /// Noise variance per complex dimension.
    pub sigma0_sq: f64,
    pub x_true: Vec<f64>,
    pub y_real: Vec<f64>,
    pub n_u: usize,
    pub n_r: usize,
    gram: DMatrix<f64>,
    h_t_y: DVector<f64>,
}

impl MimoInstance {
    pub fn new(
        h_real: DMatrix<f64>,
        sigma0_sq: f64,
        x_true: Vec<f64>,
        y_real: Vec<f64>,
    ) -> Result<Self> {
        let (rows, cols) = h_real.shape();
        if rows % 2 != 0 || cols % 2 != 0 {
            return Err(Error::InvalidArgument("lifted channel must have even shape".into()));
        }
        check_dim(cols, x_true.len())?;
        check_dim(rows, y_real.len())?;
        let gram = h_real.transpose() * &h_real;
        let h_t_y = h_real.transpose() * DVector::from_column_slice(&y_real);
        Ok(MimoInstance {
            h_real,
            sigma0_sq,
            x_true,
            y_real,
            n_u: cols / 2,
            n_r: rows / 2,
            gram,
            h_t_y,
        })
    }

    /// Draws a channel, a uniform symbol vector and circular Gaussian noise.
    pub fn generate<R: Rng + ?Sized>(
        n_r: usize,
        n_u: usize,
        constellation: &Constellation,
        snr_db: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_r == 0 || n_u == 0 {
            return Err(Error::InvalidArgument("n_r and n_u must be at least 1".into()));
        }
        let h = gen_channel(n_r, n_u, rng);
        let x = DVector::from_fn(n_u, |_, _| {
            let (a, b) = constellation.points[rng.random_range(0..constellation.points.len())];
            Complex::new(a, b)
        });
        let sigma0_sq = noise_variance_from_snr(n_u, n_r, constellation, snr_db);
        let noise = Normal::new(0.0, (sigma0_sq / 2.0).sqrt()).expect("valid std");
        let n = DVector::from_fn(n_r, |_, _| Complex::new(noise.sample(rng), noise.sample(rng)));
        let y = &h * &x + n;
        let (h_real, x_real) = lift_real(&h, &x)?;
        let y_real = lift_vector(&y);
        Self::new(h_real, sigma0_sq, x_real.as_slice().to_vec(), y_real.as_slice().to_vec())
    }

    /// `‖y − H x‖²` in the lifted domain.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let hx = &self.h_real * DVector::from_column_slice(x);
        self.y_real.iter().zip(hx.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// `Hᵀ(y − Hx) / var` added into `out`.
    fn add_likelihood_score(&self, x: &[f64], var: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut g = self.h_t_y[i];
            for (j, xj) in x.iter().enumerate() {
                g -= self.gram[(i, j)] * xj;
            }
            *o += g / var;
        }
    }
}

/// Score of the Gaussian-smoothed uniform prior over the constellation
/// levels, coordinate by coordinate: real parts use `levels_re`, imaginary
/// parts `levels_im`.
pub fn smoothed_prior_score(
    x: &[f64],
    level_sigma: f64,
    constellation: &Constellation,
) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    add_prior_score(x, level_sigma, constellation, &mut out);
    out
}

fn add_prior_score(x: &[f64], sigma: f64, constellation: &Constellation, out: &mut [f64]) {
    let n = x.len() / 2;
    let s2 = sigma * sigma;
    for (i, (xi, o)) in x.iter().zip(out.iter_mut()).enumerate() {
        let levels = if i < n { &constellation.levels_re } else { &constellation.levels_im };
        // softmax weights in log space
        let m = levels
            .iter()
            .map(|s| -(xi - s) * (xi - s) / (2.0 * s2))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for s in levels {
            let w = (-(xi - s) * (xi - s) / (2.0 * s2) - m).exp();
            num += w * (s - xi);
            den += w;
        }
        *o += num / (den * s2);
    }
}

/// Log of the smoothed prior, up to a constant. Test oracle for
/// [`smoothed_prior_score`].
pub fn smoothed_prior_log_density(
    x: &[f64],
    level_sigma: f64,
    constellation: &Constellation,
) -> f64 {
    let n = x.len() / 2;
    let s2 = level_sigma * level_sigma;
    x.iter()
        .enumerate()
        .map(|(i, xi)| {
            let levels = if i < n { &constellation.levels_re } else { &constellation.levels_im };
            let logs: Vec<f64> = levels.iter().map(|s| -(xi - s) * (xi - s) / (2.0 * s2)).collect();
            crate::target::log_sum_exp(&logs)
        })
        .sum()
}

/// Likelihood variance at annealing level `σ_ℓ`: `σ₀²/2 + σ_ℓ²`.
pub fn tempered_variance(inst: &MimoInstance, level_sigma: f64) -> f64 {
    inst.sigma0_sq / 2.0 + level_sigma * level_sigma
}

/// `Hᵀ(y − Hx)/(σ₀²/2 + σ_ℓ²) + smoothed prior score`.
pub fn posterior_score(
    x: &[f64],
    inst: &MimoInstance,
    level_sigma: f64,
    constellation: &Constellation,
) -> Result<Vec<f64>> {
    check_dim(2 * inst.n_u, x.len())?;
    let mut out = vec![0.0; x.len()];
    inst.add_likelihood_score(x, tempered_variance(inst, level_sigma), &mut out);
    add_prior_score(x, level_sigma, constellation, &mut out);
    Ok(out)
}

/// Likelihood part of [`posterior_score`] alone.
pub fn likelihood_score(x: &[f64], inst: &MimoInstance, level_sigma: f64) -> Result<Vec<f64>> {
    check_dim(2 * inst.n_u, x.len())?;
    let mut out = vec![0.0; x.len()];
    inst.add_likelihood_score(x, tempered_variance(inst, level_sigma), &mut out);
    Ok(out)
}

/// The level-`σ_ℓ` annealed posterior as a score-only target.
pub struct AnnealedPosterior<'a> {
    pub instance: &'a MimoInstance,
    pub constellation: &'a Constellation,
    pub level_sigma: f64,
}

impl TargetModel for AnnealedPosterior<'_> {
    fn dim(&self) -> usize {
        2 * self.instance.n_u
    }

    fn score_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        out.iter_mut().for_each(|o| *o = 0.0);
        let var = tempered_variance(self.instance, self.level_sigma);
        self.instance.add_likelihood_score(x, var, out);
        add_prior_score(x, self.level_sigma, self.constellation, out);
        Ok(())
    }

    fn has_log_density(&self) -> bool {
        true
    }

    /// Unnormalized: `−‖y − Hx‖²/(2v) + Σᵢ log Σₛ exp(−(xᵢ − s)²/(2σ²))`.
    fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let var = tempered_variance(self.instance, self.level_sigma);
        Ok(-self.instance.residual(x) / (2.0 * var)
            + smoothed_prior_log_density(x, self.level_sigma, self.constellation))
    }
}

impl AnnealedPosterior<'_> {
    /// Upper bound of [`TargetModel::log_density`] over all x: each prior
    /// coordinate contributes at most the log of its level count.
    pub fn log_density_bound(&self) -> f64 {
        let n = self.instance.n_u as f64;
        n * ((self.constellation.levels_re.len() as f64).ln()
            + (self.constellation.levels_im.len() as f64).ln())
    }
}

/// One origin-centred cylinder per complex symbol, over `(i, i + n_u)`.
pub fn symbol_obstacles(
    n_u: usize,
    radius: f64,
    constellation: &Constellation,
) -> Result<ObstacleSet> {
    let limit = constellation.min_level_magnitude();
    if !(radius > 0.0 && radius < limit) {
        return Err(Error::InvalidArgument(format!(
            "obstacle radius must lie in (0, {limit}), got {radius}"
        )));
    }
    let obstacles =
        (0..n_u).map(|i| Obstacle::cylinder((i, i + n_u), radius)).collect::<Result<Vec<_>>>()?;
    ObstacleSet::new(obstacles)
}

/// Noise levels and per-level step sizes of an annealed sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub levels: Vec<f64>,
    pub steps_per_level: usize,
    pub step_sizes: Vec<f64>,
}

impl AnnealSchedule {
    /// `n_levels` geometric noise scales from `sigma_max` down to
    /// `sigma_min`, with step size `eps · σ_ℓ²` at each level.
    pub fn geometric(
        sigma_max: f64,
        sigma_min: f64,
        n_levels: usize,
        steps_per_level: usize,
        eps: f64,
    ) -> Result<Self> {
        if n_levels == 0 {
            return Err(Error::InvalidArgument("need at least one annealing level".into()));
        }
        let levels: Vec<f64> = if n_levels == 1 {
            vec![sigma_max]
        } else {
            let ratio = (sigma_min / sigma_max).powf(1.0 / (n_levels - 1) as f64);
            (0..n_levels).map(|l| sigma_max * ratio.powi(l as i32)).collect()
        };
        let step_sizes = levels.iter().map(|s| eps * s * s).collect();
        let s = AnnealSchedule { levels, steps_per_level, step_sizes };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidArgument("need at least one annealing level".into()));
        }
        if self.levels.len() != self.step_sizes.len() {
            return Err(Error::InvalidArgument("one step size per level required".into()));
        }
        if self.levels.iter().any(|s| !(*s > 0.0)) || self.step_sizes.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidArgument("levels and step sizes must be positive".into()));
        }
        if self.levels.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidArgument("noise levels must be strictly decreasing".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.levels.len() * self.steps_per_level
    }
}

/// Outcome of a Langevin detector on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Best projected candidate.
    pub x_hat: Vec<f64>,
    pub residual: f64,
    /// Projected residual of every chain, `None` for chains that failed.
    pub candidate_residuals: Vec<Option<f64>>,
    pub candidates: Vec<Option<Vec<f64>>>,
}

/// Seed for the chains of instance `instance_index` under a run seed.
pub fn instance_seed(seed: u64, instance_index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ instance_index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one annealed chain from `rng` and returns its final (unprojected)
/// state. With [`Repulsion::Exact`] the potential offset is
/// `log_density_bound + 1`, so `U ≥ 1` everywhere.
pub fn annealed_chain(
    inst: &MimoInstance,
    schedule: &AnnealSchedule,
    obstacles: &ObstacleSet,
    cfg: &SamplerConfig,
    constellation: &Constellation,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let d = 2 * inst.n_u;
    let rule = if obstacles.is_empty() { StepRule::Ula } else { StepRule::Shielded };
    let mut x = Init::standard_normal(d).draw(obstacles, rng)?;
    let mut counters = ChainCounters::default();
    let mut k = 0;
    for (sigma, eta) in schedule.levels.iter().zip(&schedule.step_sizes) {
        let target = AnnealedPosterior { instance: inst, constellation, level_sigma: *sigma };
        let view = PotentialView::new(&target, target.log_density_bound() + 1.0)?;
        let view = (cfg.repulsion == Repulsion::Exact).then_some(&view);
        let stepper = Stepper::new(rule, Dynamics::new(&target, view, obstacles), cfg)?;
        for _ in 0..schedule.steps_per_level {
            x = stepper.step(&x, k, *eta, rng, &mut counters)?;
            k += 1;
        }
    }
    Ok(x)
}

/// Best-of-`n_candidates` annealed Langevin detector. Chains use the
/// streams `0..n_candidates` of [`instance_seed`]`(seed, instance_index)`;
/// an empty obstacle set gives the unconstrained annealed baseline.
#[allow(clippy::too_many_arguments)]
pub fn detect_langevin(
    inst: &MimoInstance,
    schedule: &AnnealSchedule,
    obstacles: &ObstacleSet,
    cfg: &SamplerConfig,
    constellation: &Constellation,
    n_candidates: usize,
    seed: u64,
    instance_index: u64,
) -> Result<Detection> {
    if n_candidates == 0 {
        return Err(Error::InvalidArgument("n_candidates must be at least 1".into()));
    }
    schedule.validate()?;
    let base = instance_seed(seed, instance_index);
    let mut candidates = Vec::with_capacity(n_candidates);
    let mut residuals = Vec::with_capacity(n_candidates);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for c in 0..n_candidates as u64 {
        let mut rng = chain_rng(base, c);
        match annealed_chain(inst, schedule, obstacles, cfg, constellation, &mut rng) {
            Ok(x) => {
                let xh = constellation.project(&x);
                let r = inst.residual(&xh);
                if best.as_ref().is_none_or(|(br, _)| r < *br) {
                    best = Some((r, xh.clone()));
                }
                residuals.push(Some(r));
                candidates.push(Some(xh));
            }
            Err(e @ Error::Config(_)) => return Err(e),
            Err(_) => {
                residuals.push(None);
                candidates.push(None);
            }
        }
    }
    let (residual, x_hat) =
        best.ok_or_else(|| Error::Detection(format!("all {n_candidates} chains failed")))?;
    Ok(Detection { x_hat, residual, candidate_residuals: residuals, candidates })
}

/// Exact ML detection by depth-first enumeration of all symbol vectors with
/// incremental residual updates. Ties keep the first vector in enumeration
/// order.
pub fn detect_ml_exhaustive(
    inst: &MimoInstance,
    constellation: &Constellation,
) -> Result<Vec<f64>> {
    let n = inst.n_u;
    let q = constellation.points.len() as u64;
    let size =
        (0..n).try_fold(1u64, |acc, _| acc.checked_mul(q).filter(|v| *v <= ML_MAX_CANDIDATES));
    if size.is_none() {
        return Err(Error::Unsupported(format!(
            "exhaustive search over {q}^{n} vectors exceeds {ML_MAX_CANDIDATES}"
        )));
    }
    let rows = inst.h_real.nrows();
    // contribution of each (user, symbol) to Hx
    let contrib: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            constellation
                .points
                .iter()
                .map(|(a, b)| {
                    (0..rows)
                        .map(|r| a * inst.h_real[(r, i)] + b * inst.h_real[(r, i + n)])
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut stack: Vec<Vec<f64>> = vec![inst.y_real.clone(); n + 1];
    let mut choice = vec![0usize; n];
    let mut best = (f64::INFINITY, vec![0usize; n]);
    let mut depth = 0usize;
    let mut next = vec![0usize; n + 1];
    loop {
        if depth == n {
            let r: f64 = stack[n].iter().map(|v| v * v).sum();
            if r < best.0 {
                best = (r, choice.clone());
            }
            depth -= 1;
            continue;
        }
        let s = next[depth];
        if s == constellation.points.len() {
            next[depth] = 0;
            if depth == 0 {
                break;
            }
            depth -= 1;
            continue;
        }
        next[depth] += 1;
        choice[depth] = s;
        let (head, tail) = stack.split_at_mut(depth + 1);
        for ((dst, src), c) in tail[0].iter_mut().zip(&head[depth]).zip(&contrib[depth][s]) {
            *dst = src - c;
        }
        depth += 1;
    }
    let mut x = vec![0.0; 2 * n];
    for (i, &k) in best.1.iter().enumerate() {
        x[i] = constellation.points[k].0;
        x[i + n] = constellation.points[k].1;
    }
    Ok(x)
}

/// Fraction of the `n_u` complex symbols whose (Re, Im) pair differs.
pub fn ser(x_hat: &[f64], x_true: &[f64], n_u: usize) -> f64 {
    symbol_errors(x_hat, x_true, n_u) as f64 / n_u as f64
}

pub fn symbol_errors(x_hat: &[f64], x_true: &[f64], n_u: usize) -> usize {
    (0..n_u).filter(|&i| x_hat[i] != x_true[i] || x_hat[i + n_u] != x_true[i + n_u]).count()
}

/// Writes instances as CSV rows: seed, snr_db, flattened row-major
/// `H_real`, `x_true`, `y_real`.
pub fn write_instances_csv<W: std::io::Write>(
    writer: W,
    rows: &[(u64, f64, &MimoInstance)],
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    if let Some((_, _, first)) = rows.first() {
        let (m, n) = first.h_real.shape();
        let mut header = vec!["seed".to_string(), "snr_db".to_string()];
        header.extend((0..m * n).map(|k| format!("h{k}")));
        header.extend((0..n).map(|k| format!("x{k}")));
        header.extend((0..m).map(|k| format!("y{k}")));
        w.write_record(&header)?;
    }
    for (seed, snr, inst) in rows {
        let mut rec = vec![seed.to_string(), snr.to_string()];
        let (m, n) = inst.h_real.shape();
        for i in 0..m {
            for j in 0..n {
                rec.push(inst.h_real[(i, j)].to_string());
            }
        }
        rec.extend(inst.x_true.iter().map(|v| v.to_string()));
        rec.extend(inst.y_real.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn qpsk_levels_and_energy() {
        let q = Constellation::qpsk();
        assert_eq!(q.levels_re, vec![-0.74, 0.74]);
        assert_eq!(q.levels_im, vec![-0.84, 0.84]);
        assert!((q.symbol_energy() - 1.2532).abs() < 1e-12);
    }

    #[test]
    fn snr_to_noise_variance() {
        let q = Constellation::qpsk();
        assert!((noise_variance_from_snr(8, 8, &q, 0.0) - 1.2532).abs() < 1e-12);
        assert!((noise_variance_from_snr(8, 8, &q, 10.0) - 0.12532).abs() < 1e-12);
        assert!(noise_variance_from_snr(8, 8, &q, 400.0) < 1e-30);
    }

    #[test]
    fn lift_examples() {
        let h = DMatrix::from_element(1, 1, Complex::new(1.0, 0.0));
        let x = DVector::from_element(1, Complex::new(0.0, 1.0));
        let (hr, xr) = lift_real(&h, &x).unwrap();
        assert_eq!(hr, DMatrix::identity(2, 2));
        assert_eq!(xr.as_slice(), &[0.0, 1.0]);

        let h = DMatrix::from_fn(2, 3, |i, j| Complex::new((i + j) as f64, 0.0));
        let hr = lift_matrix(&h);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(hr[(i, j + 3)], 0.0);
                assert_eq!(hr[(i + 2, j)], 0.0);
            }
        }
        assert!(lift_real(&h, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn channel_shape_and_determinism() {
        let a = gen_channel(8, 8, &mut rng(4));
        let b = gen_channel(8, 8, &mut rng(4));
        assert_eq!(a.shape(), (8, 8));
        assert_eq!(a, b);
        assert_eq!(gen_channel(1, 1, &mut rng(1)).shape(), (1, 1));
    }

    #[test]
    fn prior_score_examples() {
        let q = Constellation::qpsk();
        let s = smoothed_prior_score(&[0.0, 0.0], 0.3, &q);
        assert!(s.iter().all(|v| v.abs() < 1e-15));
        let sigma = 0.02;
        let x = [0.70, 0.80];
        let s = smoothed_prior_score(&x, sigma, &q);
        assert!((s[0] - (0.74 - 0.70) / (sigma * sigma)).abs() < 1e-9);
        assert!((s[1] - (0.84 - 0.80) / (sigma * sigma)).abs() < 1e-9);
    }

    #[test]
    fn symbol_obstacle_geometry() {
        let q = Constellation::qpsk();
        let one = symbol_obstacles(1, 0.5, &q).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.is_feasible(&[0.74, 0.84]));
        assert!(!one.is_feasible(&[0.0, 0.0]));
        let eight = symbol_obstacles(8, 0.5, &q).unwrap();
        assert_eq!(eight.len(), 8);
        assert!(symbol_obstacles(2, 0.74, &q).is_err());
        assert!(symbol_obstacles(2, 0.0, &q).is_err());
    }

    #[test]
    fn ser_examples() {
        let a = vec![0.74, -0.74, 0.84, 0.84];
        assert_eq!(ser(&a, &a, 2), 0.0);
        let b = vec![-0.74, 0.74, -0.84, -0.84];
        assert_eq!(ser(&a, &b, 2), 1.0);
        let q = Constellation::qpsk();
        let x: Vec<f64> = [0.74; 8].iter().chain([0.84; 8].iter()).copied().collect();
        let mut y = x.clone();
        y[11] = -0.84;
        assert_eq!(ser(&y, &x, 8), 0.125);
        assert_eq!(q.project(&[0.1, -0.2]), vec![0.74, -0.84]);
    }

    #[test]
    fn schedule_validation() {
        let s = AnnealSchedule::geometric(0.84, 0.01, 5, 40, 0.1).unwrap();
        assert_eq!(s.levels.len(), 5);
        assert!((s.levels[0] - 0.84).abs() < 1e-15 && (s.levels[4] - 0.01).abs() < 1e-12);
        assert_eq!(s.total_steps(), 200);
        let bad = AnnealSchedule {
            levels: vec![0.5, 0.5],
            steps_per_level: 1,
            step_sizes: vec![0.1, 0.1],
        };
        assert!(bad.validate().is_err());
        assert!(AnnealSchedule::geometric(0.84, 0.01, 0, 40, 0.1).is_err());
    }

    #[test]
    fn ml_guard() {
        let q = Constellation::qpsk();
        let inst = MimoInstance::generate(13, 13, &q, 10.0, &mut rng(0)).unwrap();
        assert!(matches!(detect_ml_exhaustive(&inst, &q), Err(Error::Unsupported(_))));
    }

    #[test]
    fn ml_recovers_noiseless_symbols() {
        let q = Constellation::qpsk();
        for s in 0..5 {
            let inst = MimoInstance::generate(4, 4, &q, 300.0, &mut rng(s)).unwrap();
            assert_eq!(detect_ml_exhaustive(&inst, &q).unwrap(), inst.x_true);
        }
    }

    #[test]
    fn instance_csv_layout() {
        let q = Constellation::qpsk();
        let inst = MimoInstance::generate(2, 2, &q, 10.0, &mut rng(0)).unwrap();
        let mut buf = Vec::new();
        write_instances_csv(&mut buf, &[(7, 10.0, &inst)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), 2 + 16 + 4 + 4);
        assert!(lines[1].starts_with("7,10,"));
    }

    #[test]
    fn zero_candidates_rejected() {
        let q = Constellation::qpsk();
        let inst = MimoInstance::generate(2, 2, &q, 10.0, &mut rng(0)).unwrap();
        let s = AnnealSchedule::geometric(0.84, 0.01, 5, 40, 0.1).unwrap();
        let cfg = SamplerConfig::default();
        let r = detect_langevin(&inst, &s, &ObstacleSet::empty(), &cfg, &q, 0, 0, 0);
        assert!(r.is_err());
    }
}
