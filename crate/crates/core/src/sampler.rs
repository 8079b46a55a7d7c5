//! Langevin samplers: plain ULA, the navigation-potential gradient, the naive
//! navigation-Langevin dynamics and the shielded update.
//!
//! The shielded update for state `x` with aggregate obstacle function β is
//!
//! ```text
//! x' = x + η [ β̃(x) ∇log p(x) + c(x) ∇β(x) ] + √(2 η τ) β̃(x) w,   w ~ N(0, I)
//! ```
//!
//! where β̃ is β saturated at the obstacle set's cap (the ∇β term is dropped
//! wherever the cap clips) and `c(x) > 0` is the repulsion coefficient:
//! `U(x)/α` with `U = −log p + C`, or a global constant ᾱ when no
//! log-density is available. Near obstacle boundaries β̃ → 0, so both the
//! attraction towards the target and the noise vanish while the repulsive
//! drift stays finite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::obstacle::ObstacleSet;
use crate::target::{PotentialView, TargetModel};

/// Attempts allowed when drawing a feasible initial point.
pub const MAX_INIT_ATTEMPTS: usize = 10_000;

/// Step-size schedule `η_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant {
        eta: f64,
    },
    /// `η_k = eta0 / √(1 + k / decay_steps)`.
    InverseSqrt {
        eta0: f64,
        decay_steps: f64,
    },
}

impl StepSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::InverseSqrt { eta0, decay_steps } => {
                eta0 / (1.0 + k as f64 / decay_steps).sqrt()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { eta } => eta > 0.0 && eta.is_finite(),
            StepSchedule::InverseSqrt { eta0, decay_steps } => {
                eta0 > 0.0 && eta0.is_finite() && decay_steps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid step schedule {self:?}")))
        }
    }
}

/// What to do when a proposal lands inside an obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibilityPolicy {
    /// Accept every proposal; infeasible states are only counted.
    MeasureOnly,
    /// Redraw the noise up to `max_retries` times; keep the current state if
    /// every retry is infeasible.
    RejectInfeasible { max_retries: usize },
}

/// Source of the repulsion coefficient multiplying ∇β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Repulsion {
    /// `U(x)/α` with `U = −log p + C` (needs a [`PotentialView`]).
    Exact,
    /// Global constant ᾱ, no log-density needed.
    Constant { alpha_bar: f64 },
    /// `−log p(x)/α`, the literal printed form. Repulsive only where
    /// `log p < 0`; kept for comparison runs.
    PrintedLogDensity,
}

/// Which update a chain applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Ula,
    Shielded,
    /// Navigation-potential gradient with isotropic constant-variance noise.
    Naive,
}

/// Initial point or initializer distribution of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    Point {
        x: Vec<f64>,
    },
    /// Isotropic Gaussian `N(mean, std² I)`, redrawn until feasible.
    Gaussian {
        mean: Vec<f64>,
        std: f64,
    },
}

impl Init {
    pub fn standard_normal(dim: usize) -> Self {
        Init::Gaussian { mean: vec![0.0; dim], std: 1.0 }
    }

    fn dim(&self) -> usize {
        match self {
            Init::Point { x } => x.len(),
            Init::Gaussian { mean, .. } => mean.len(),
        }
    }

    /// Draws a feasible starting point, retrying up to [`MAX_INIT_ATTEMPTS`].
    pub fn draw<R: Rng + ?Sized>(&self, obstacles: &ObstacleSet, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            Init::Point { x } => {
                if obstacles.is_feasible(x) {
                    Ok(x.clone())
                } else {
                    Err(Error::Initialization { attempts: 1 })
                }
            }
            Init::Gaussian { mean, std } => {
                for _ in 0..MAX_INIT_ATTEMPTS {
                    let x: Vec<f64> = mean
                        .iter()
                        .map(|m| m + std * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    if obstacles.is_feasible(&x) {
                        return Ok(x);
                    }
                }
                Err(Error::Initialization { attempts: MAX_INIT_ATTEMPTS })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Navigation-function tuning parameter α.
    pub alpha: f64,
    pub repulsion: Repulsion,
    /// Temperature τ.
    pub tau: f64,
    pub step: StepSchedule,
    pub n_steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub feasibility: FeasibilityPolicy,
    pub record_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            alpha: 1.0,
            repulsion: Repulsion::Exact,
            tau: 0.2,
            step: StepSchedule::Constant { eta: 1e-3 },
            n_steps: 50_000,
            burn_in: 1_000,
            seed: 0,
            feasibility: FeasibilityPolicy::MeasureOnly,
            record_every: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if let Repulsion::Constant { alpha_bar } = self.repulsion {
            if !(alpha_bar > 0.0 && alpha_bar.is_finite()) {
                return Err(Error::Config(format!("alpha_bar must be positive, got {alpha_bar}")));
            }
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be non-negative, got {}", self.tau)));
        }
        self.step.validate()?;
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.burn_in > self.n_steps {
            return Err(Error::Config(format!(
                "burn_in ({}) exceeds n_steps ({})",
                self.burn_in, self.n_steps
            )));
        }
        Ok(())
    }

    /// Number of samples a chain with this config records.
    pub fn n_samples(&self) -> usize {
        (self.n_steps - self.burn_in) / self.record_every
    }
}

/// The model a chain moves in: target, optional potential and obstacles.
#[derive(Clone, Copy)]
pub struct Dynamics<'a> {
    pub target: &'a dyn TargetModel,
    pub view: Option<&'a PotentialView<'a>>,
    pub obstacles: &'a ObstacleSet,
}

impl<'a> Dynamics<'a> {
    pub fn new(
        target: &'a dyn TargetModel,
        view: Option<&'a PotentialView<'a>>,
        obstacles: &'a ObstacleSet,
    ) -> Self {
        Dynamics { target, view, obstacles }
    }
}

/// `x + η·score + √(2τη)·noise`.
pub fn ula_step(x: &[f64], score: &[f64], eta: f64, tau: f64, noise: &[f64]) -> Result<Vec<f64>> {
    check_dim(x.len(), score.len())?;
    check_dim(x.len(), noise.len())?;
    let sd = (2.0 * eta * tau).sqrt();
    let next: Vec<f64> =
        x.iter().zip(score).zip(noise).map(|((a, s), w)| a + eta * s + sd * w).collect();
    finite_or(next, 0)
}

/// Navigation potential `U / (U^α + β)^{1/α}`.
pub fn rk_potential(u: f64, beta: f64, alpha: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::Domain(format!("potential U must be positive, got {u}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    let base = u.powf(alpha) + beta;
    if !(base > 0.0) {
        return Err(Error::Domain(format!("U^alpha + beta = {base} is not positive")));
    }
    Ok(u / base.powf(1.0 / alpha))
}

/// Gradient of the navigation potential,
/// `[β ∇U − (U/α) ∇β] / (U^α + β)^{1 + 1/α}`.
pub fn rk_gradient(
    u: f64,
    grad_u: &[f64],
    beta: f64,
    grad_beta: &[f64],
    alpha: f64,
) -> Result<Vec<f64>> {
    check_dim(grad_u.len(), grad_beta.len())?;
    if !(u > 0.0) {
        return Err(Error::Domain(format!("potential U must be positive, got {u}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    let base = u.powf(alpha) + beta;
    if !(base > 0.0) {
        return Err(Error::Domain(format!("U^alpha + beta = {base} is not positive")));
    }
    let denom = base.powf(1.0 + 1.0 / alpha);
    let c = u / alpha;
    Ok(grad_u.iter().zip(grad_beta).map(|(gu, gb)| (beta * gu - c * gb) / denom).collect())
}

fn finite_or(x: Vec<f64>, step: usize) -> Result<Vec<f64>> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::NumericalFailure { step })
    }
}

/// Deterministic parts of one shielded or naive update at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftEval {
    /// `β̃ ∇log p + c ∇β` (∇β dropped where the cap clips).
    pub drift: Vec<f64>,
    /// Saturated aggregate β.
    pub beta: f64,
    /// Repulsion coefficient `c`.
    pub repulsion: f64,
    /// `U(x)` when the exact potential was evaluated.
    pub potential: Option<f64>,
    pub clipped: bool,
    grad_beta: Vec<f64>,
    score: Vec<f64>,
}

/// Evaluates the shielded drift at `x`.
pub fn shielded_drift(x: &[f64], dynamics: &Dynamics, cfg: &SamplerConfig) -> Result<DriftEval> {
    let d = dynamics.target.dim();
    check_dim(d, x.len())?;
    let mut score = vec![0.0; d];
    dynamics.target.score_into(x, &mut score)?;
    dynamics.obstacles.check_point(x)?;
    let mut grad = vec![0.0; d];
    let (beta_t, clipped) = dynamics.obstacles.eval_drift_into(x, &mut grad);

    let mut potential = None;
    let repulsion = match cfg.repulsion {
        Repulsion::Exact => {
            let view = dynamics.view.ok_or_else(|| {
                Error::Config("exact repulsion needs a potential view; set alpha_bar".into())
            })?;
            let u = view.potential_value(x)?;
            potential = Some(u);
            u / cfg.alpha
        }
        Repulsion::Constant { alpha_bar } => alpha_bar,
        Repulsion::PrintedLogDensity => -dynamics.target.log_density(x)? / cfg.alpha,
    };

    let mut drift: Vec<f64> = score.iter().map(|s| beta_t * s).collect();
    let active = !clipped && !dynamics.obstacles.is_empty();
    if active {
        for (dr, g) in drift.iter_mut().zip(&grad) {
            *dr += repulsion * g;
        }
    }
    let grad_beta = if active { grad } else { vec![0.0; d] };
    Ok(DriftEval { drift, beta: beta_t, repulsion, potential, clipped, grad_beta, score })
}

/// One shielded update with caller-supplied standard-normal `noise`.
pub fn shielded_step(
    x: &[f64],
    dynamics: &Dynamics,
    cfg: &SamplerConfig,
    eta: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    let eval = shielded_drift(x, dynamics, cfg)?;
    apply_shielded(x, &eval, eta, cfg.tau, noise, 0)
}

fn apply_shielded(
    x: &[f64],
    eval: &DriftEval,
    eta: f64,
    tau: f64,
    noise: &[f64],
    step: usize,
) -> Result<Vec<f64>> {
    check_dim(x.len(), noise.len())?;
    let sd = (2.0 * eta * tau).sqrt() * eval.beta.abs();
    let next: Vec<f64> =
        x.iter().zip(&eval.drift).zip(noise).map(|((a, dr), w)| a + eta * dr + sd * w).collect();
    finite_or(next, step)
}

/// Gradient of the navigation potential at `x`, using the same saturated β
/// and clipped ∇β as the shielded drift.
pub fn naive_gradient(x: &[f64], dynamics: &Dynamics, cfg: &SamplerConfig) -> Result<Vec<f64>> {
    let eval = shielded_drift(x, dynamics, &SamplerConfig { repulsion: Repulsion::Exact, ..*cfg })?;
    naive_gradient_from(&eval, cfg.alpha)
}

fn naive_gradient_from(eval: &DriftEval, alpha: f64) -> Result<Vec<f64>> {
    let u =
        eval.potential.ok_or_else(|| Error::Config("naive dynamics need a potential".into()))?;
    let grad_u: Vec<f64> = eval.score.iter().map(|s| -s).collect();
    rk_gradient(u, &grad_u, eval.beta, &eval.grad_beta, alpha)
}

/// `x − η ∇φ_α(x) + √(2τη)·noise`: the naive navigation-Langevin update.
pub fn naive_shielded_step(
    x: &[f64],
    dynamics: &Dynamics,
    cfg: &SamplerConfig,
    eta: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    let grad = naive_gradient(x, dynamics, cfg)?;
    let minus: Vec<f64> = grad.iter().map(|g| -g).collect();
    ula_step(x, &minus, eta, cfg.tau, noise)
}

/// Per-chain event counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainCounters {
    pub n_infeasible_steps: usize,
    pub n_rejected_proposals: usize,
    pub n_nonpositive_potential: usize,
}

/// Applies one step rule with a fixed configuration, drawing noise from a
/// caller-owned RNG. Shared by [`run_chain`] and the annealed detectors.
pub struct Stepper<'a> {
    pub rule: StepRule,
    pub dynamics: Dynamics<'a>,
    pub cfg: &'a SamplerConfig,
}

impl<'a> Stepper<'a> {
    pub fn new(rule: StepRule, dynamics: Dynamics<'a>, cfg: &'a SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        let needs_view = rule == StepRule::Naive
            || (rule == StepRule::Shielded && cfg.repulsion == Repulsion::Exact);
        if needs_view && dynamics.view.is_none() {
            return Err(Error::Config(
                "this step rule needs a potential view (log-density) or a constant alpha_bar"
                    .into(),
            ));
        }
        if rule == StepRule::Shielded
            && cfg.repulsion == Repulsion::PrintedLogDensity
            && !dynamics.target.has_log_density()
        {
            return Err(Error::Config("printed-form repulsion needs a log-density".into()));
        }
        Ok(Stepper { rule, dynamics, cfg })
    }

    fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Advances `x` by one step `k` with step size `eta`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        k: usize,
        eta: f64,
        rng: &mut R,
        counters: &mut ChainCounters,
    ) -> Result<Vec<f64>> {
        let d = x.len();
        let tau = self.cfg.tau;
        // deterministic part, reused across noise redraws
        let (eval, ula_score, naive_drift) = match self.rule {
            StepRule::Ula => {
                let s = self.dynamics.target.score(x)?;
                (None, Some(s), None)
            }
            StepRule::Shielded => (Some(shielded_drift(x, &self.dynamics, self.cfg)?), None, None),
            StepRule::Naive => {
                let cfg = SamplerConfig { repulsion: Repulsion::Exact, ..*self.cfg };
                let e = shielded_drift(x, &self.dynamics, &cfg)?;
                let g = naive_gradient_from(&e, self.cfg.alpha)?;
                let minus: Vec<f64> = g.iter().map(|v| -v).collect();
                (Some(e), None, Some(minus))
            }
        };
        if let Some(u) = eval.as_ref().and_then(|e| e.potential) {
            if u <= 0.0 {
                counters.n_nonpositive_potential += 1;
            }
        }
        let propose = |noise: &[f64]| -> Result<Vec<f64>> {
            let next = match self.rule {
                StepRule::Ula => ula_step(x, ula_score.as_ref().unwrap(), eta, tau, noise),
                StepRule::Shielded => apply_shielded(x, eval.as_ref().unwrap(), eta, tau, noise, k),
                StepRule::Naive => ula_step(x, naive_drift.as_ref().unwrap(), eta, tau, noise),
            };
            next.map_err(|e| match e {
                Error::NumericalFailure { .. } => Error::NumericalFailure { step: k },
                other => other,
            })
        };

        let obstacles = self.dynamics.obstacles;
        let mut next = propose(&self.draw_noise(rng, d))?;
        match self.cfg.feasibility {
            FeasibilityPolicy::MeasureOnly => {}
            FeasibilityPolicy::RejectInfeasible { max_retries } => {
                let mut tries = 0;
                while !obstacles.is_feasible(&next) {
                    counters.n_rejected_proposals += 1;
                    if tries == max_retries {
                        next = x.to_vec();
                        break;
                    }
                    tries += 1;
                    next = propose(&self.draw_noise(rng, d))?;
                }
            }
        }
        if !obstacles.is_feasible(&next) {
            counters.n_infeasible_steps += 1;
        }
        Ok(next)
    }
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainResult {
    /// States after burn-in, every `record_every` steps.
    pub samples: Vec<Vec<f64>>,
    /// 1-based step index at which each sample was recorded.
    pub sample_steps: Vec<usize>,
    pub n_infeasible_steps: usize,
    pub n_rejected_proposals: usize,
    pub n_nonpositive_potential: usize,
    pub n_steps: usize,
    pub final_state: Vec<f64>,
}

impl ChainResult {
    /// Fraction of all steps that ended in an infeasible state.
    pub fn infeasible_fraction(&self) -> f64 {
        if self.n_steps == 0 {
            0.0
        } else {
            self.n_infeasible_steps as f64 / self.n_steps as f64
        }
    }
}

/// Deterministic RNG stream for chain `chain_index` under `seed`.
pub fn chain_rng(seed: u64, chain_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_index);
    rng
}

/// Runs one chain of `cfg.n_steps` steps on the stream `(cfg.seed, chain_index)`.
pub fn run_chain(
    init: &Init,
    rule: StepRule,
    cfg: &SamplerConfig,
    dynamics: &Dynamics,
    chain_index: u64,
) -> Result<ChainResult> {
    let stepper = Stepper::new(rule, *dynamics, cfg)?;
    check_dim(dynamics.target.dim(), init.dim())?;
    let mut rng = chain_rng(cfg.seed, chain_index);
    let mut x = init.draw(dynamics.obstacles, &mut rng)?;
    let mut counters = ChainCounters::default();
    let mut samples = Vec::with_capacity(cfg.n_samples());
    let mut sample_steps = Vec::with_capacity(cfg.n_samples());
    for k in 0..cfg.n_steps {
        x = stepper.step(&x, k, cfg.step.at(k), &mut rng, &mut counters)?;
        let done = k + 1;
        if done > cfg.burn_in && (done - cfg.burn_in).is_multiple_of(cfg.record_every) {
            samples.push(x.clone());
            sample_steps.push(done);
        }
    }
    Ok(ChainResult {
        samples,
        sample_steps,
        n_infeasible_steps: counters.n_infeasible_steps,
        n_rejected_proposals: counters.n_rejected_proposals,
        n_nonpositive_potential: counters.n_nonpositive_potential,
        n_steps: cfg.n_steps,
        final_state: x,
    })
}

/// Runs `n_chains` independent chains on streams `0..n_chains`, in parallel.
/// Results come back in chain order and do not depend on scheduling.
pub fn run_ensemble(
    init: &Init,
    rule: StepRule,
    cfg: &SamplerConfig,
    dynamics: &Dynamics,
    n_chains: usize,
) -> Result<Vec<ChainResult>> {
    (0..n_chains as u64).into_par_iter().map(|c| run_chain(init, rule, cfg, dynamics, c)).collect()
}
