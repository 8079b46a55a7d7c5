//! Experiment configuration and the three studies behind the CLI: the
//! planar Gaussian-mixture sweep over α, the naive-vs-shielded violation
//! ablation, and the MIMO SER sweep.
//!
//! Every study is split into a pure computation (`*_study`) returning an
//! in-memory report and a `run_*` wrapper that writes the artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::{
    histogram_tv, mean_distance_to_nearest_mode, rejection_oracle, SampleStats,
};
use crate::error::{Error, Result};
use crate::mimo::{
    detect_langevin, detect_ml_exhaustive, instance_seed, symbol_errors, symbol_obstacles,
    write_instances_csv, AnnealSchedule, Constellation, MimoInstance, ML_MAX_CANDIDATES,
};
use crate::obstacle::{CapMode, Obstacle, ObstacleSet};
use crate::sampler::{
    chain_rng, run_ensemble, ChainResult, Dynamics, Init, Repulsion, SamplerConfig, StepRule,
    StepSchedule,
};
use crate::svg::Plot;
use crate::target::{calibrate_offset, AxisBox, GaussianMixture, GmmSpec, PotentialView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Gmm,
    Mimo,
    #[serde(alias = "naive-ablation")]
    NaiveAblation,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Gmm => "gmm",
            ExperimentKind::Mimo => "mimo",
            ExperimentKind::NaiveAblation => "naive_ablation",
        }
    }
}

/// Top-level configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub sampler: SamplerConfig,
    pub gmm: GmmBlock,
    pub naive: NaiveBlock,
    pub mimo: MimoBlock,
    pub output: OutputBlock,
}

/// Planar mixture, obstacles and analysis settings shared by the GMM study
/// and the naive ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmBlock {
    pub target: GmmSpec,
    pub obstacles: Vec<Obstacle>,
    pub beta_cap: Option<f64>,
    pub cap_mode: CapMode,
    /// One run per α.
    pub alphas: Vec<f64>,
    /// Chains per run; samples are pooled in chain order.
    pub n_chains: usize,
    pub init: Init,
    pub assign_radius: f64,
    pub boundary_delta: f64,
    /// Square histogram and potential-calibration box `[lo, hi]²`.
    pub box_lo: f64,
    pub box_hi: f64,
    pub hist_bins: usize,
    /// Exact reference draws for the TV column; 0 disables it.
    pub oracle_draws: usize,
    /// Grid probes used to pick the potential offset.
    pub offset_probes: usize,
}

impl Default for GmmBlock {
    fn default() -> Self {
        GmmBlock {
            target: GaussianMixture::planar_benchmark().spec(),
            obstacles: vec![
                Obstacle::Sphere { center: vec![-1.0, 1.0], radius: 0.4 },
                Obstacle::Sphere { center: vec![-1.0, 0.1], radius: 0.4 },
            ],
            beta_cap: Some(5.0),
            cap_mode: CapMode::Aggregate,
            alphas: vec![0.1, 1.0, 7.0],
            n_chains: 1,
            init: Init::standard_normal(2),
            assign_radius: 2.0,
            boundary_delta: 0.05,
            box_lo: -6.0,
            box_hi: 6.0,
            hist_bins: 20,
            oracle_draws: 100_000,
            offset_probes: 10_000,
        }
    }
}

/// Paired naive/shielded runs; seed `s` uses `sampler.seed + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NaiveBlock {
    pub seeds: usize,
    pub n_chains: usize,
    pub n_steps: usize,
}

impl Default for NaiveBlock {
    fn default() -> Self {
        NaiveBlock { seeds: 10, n_chains: 50, n_steps: 20_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MimoRepulsion {
    /// Each entry of `alpha_bars` is a constant repulsion coefficient.
    AlphaBar,
    /// Each entry is the navigation α, with coefficient `U/α`.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MimoBlock {
    pub n_u: usize,
    pub n_r: usize,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub n_levels: usize,
    pub steps_per_level: usize,
    /// Step size at level ℓ is `step_scale · σ_ℓ²`.
    pub step_scale: f64,
    pub alpha_bars: Vec<f64>,
    pub repulsion: MimoRepulsion,
    pub obstacle_radius: f64,
    pub beta_cap: f64,
    pub cap_mode: CapMode,
    pub n_candidates: usize,
    /// Also write `instances.csv`.
    pub dump_instances: bool,
}

impl Default for MimoBlock {
    fn default() -> Self {
        MimoBlock {
            n_u: 8,
            n_r: 8,
            snr_db: vec![0.0, 5.0, 10.0, 15.0],
            trials: 500,
            sigma_max: 0.84,
            sigma_min: 0.01,
            n_levels: 5,
            steps_per_level: 40,
            step_scale: 0.3,
            alpha_bars: vec![100.0, 250.0, 500.0],
            repulsion: MimoRepulsion::AlphaBar,
            obstacle_radius: 0.5,
            beta_cap: 0.25,
            cap_mode: CapMode::PerFactor,
            n_candidates: 10,
            dump_instances: false,
        }
    }
}

impl MimoBlock {
    pub fn schedule(&self) -> Result<AnnealSchedule> {
        AnnealSchedule::geometric(
            self.sigma_max,
            self.sigma_min,
            self.n_levels,
            self.steps_per_level,
            self.step_scale,
        )
    }

    pub fn obstacles(&self, constellation: &Constellation) -> Result<ObstacleSet> {
        let base = symbol_obstacles(self.n_u, self.obstacle_radius, constellation)?;
        Ok(ObstacleSet::with_cap(base.obstacles().to_vec(), Some(self.beta_cap))?
            .with_cap_mode(self.cap_mode))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub plot: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: PathBuf::from("out"), plot: false }
    }
}

impl ExperimentConfig {
    /// The built-in setup for each study.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let sampler = match kind {
            ExperimentKind::Gmm | ExperimentKind::NaiveAblation => SamplerConfig {
                alpha: 1.0,
                repulsion: Repulsion::Exact,
                tau: 0.2,
                step: StepSchedule::Constant { eta: 1e-2 },
                n_steps: 50_000,
                burn_in: 1_000,
                ..SamplerConfig::default()
            },
            ExperimentKind::Mimo => SamplerConfig { tau: 1.0, ..SamplerConfig::default() },
        };
        ExperimentConfig {
            experiment: kind,
            sampler,
            gmm: GmmBlock::default(),
            naive: NaiveBlock::default(),
            mimo: MimoBlock::default(),
            output: OutputBlock::default(),
        }
    }

    /// Parses JSON text, filling every omitted key from
    /// [`default_for`](Self::default_for) of the declared (or `fallback`)
    /// experiment kind.
    pub fn from_json(text: &str, fallback: ExperimentKind) -> Result<Self> {
        let user: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        let kind = match user.get("experiment") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::Config(format!("experiment: {e}")))?,
            None => fallback,
        };
        let mut merged = serde_json::to_value(Self::default_for(kind)).expect("defaults serialize");
        merge(&mut merged, user);
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, fallback: ExperimentKind) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text, fallback).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Range checks for everything the selected study uses.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |key: &str, msg: String| Err(Error::Config(format!("{key}: {msg}")));
        self.sampler.validate().map_err(|e| Error::Config(format!("sampler: {e}")))?;
        match self.experiment {
            ExperimentKind::Gmm | ExperimentKind::NaiveAblation => {
                let g = &self.gmm;
                g.target.build().map_err(|e| Error::Config(format!("gmm.target: {e}")))?;
                self.gmm_obstacles().map_err(|e| Error::Config(format!("gmm.obstacles: {e}")))?;
                if g.alphas.is_empty() || g.alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                    return cfg_err("gmm.alphas", "need at least one positive value".into());
                }
                if g.n_chains == 0 {
                    return cfg_err("gmm.n_chains", "must be at least 1".into());
                }
                if !(g.box_lo < g.box_hi) || g.hist_bins == 0 {
                    return cfg_err("gmm.box_lo/box_hi/hist_bins", "empty histogram box".into());
                }
                if !(g.assign_radius > 0.0) || !(g.boundary_delta > 0.0) {
                    return cfg_err("gmm.assign_radius/boundary_delta", "must be positive".into());
                }
                if g.offset_probes == 0 {
                    return cfg_err("gmm.offset_probes", "must be at least 1".into());
                }
                if self.experiment == ExperimentKind::NaiveAblation {
                    let n = &self.naive;
                    if n.seeds == 0 || n.n_chains == 0 || n.n_steps == 0 {
                        return cfg_err(
                            "naive",
                            "seeds, n_chains and n_steps must be positive".into(),
                        );
                    }
                }
            }
            ExperimentKind::Mimo => {
                let m = &self.mimo;
                if m.n_u == 0 || m.n_r == 0 {
                    return cfg_err("mimo.n_u/n_r", "must be at least 1".into());
                }
                if m.snr_db.is_empty() || m.snr_db.iter().any(|s| !s.is_finite()) {
                    return cfg_err("mimo.snr_db", "need a non-empty list of finite values".into());
                }
                if m.trials == 0 {
                    return cfg_err("mimo.trials", "must be at least 1".into());
                }
                if m.n_candidates == 0 {
                    return cfg_err("mimo.n_candidates", "must be at least 1".into());
                }
                if m.alpha_bars.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                    return cfg_err("mimo.alpha_bars", "values must be positive".into());
                }
                m.schedule().map_err(|e| Error::Config(format!("mimo schedule: {e}")))?;
                m.obstacles(&Constellation::qpsk())
                    .map_err(|e| Error::Config(format!("mimo obstacles: {e}")))?;
                let size = 4f64.powi(m.n_u as i32);
                if size > ML_MAX_CANDIDATES as f64 {
                    return cfg_err("mimo.n_u", format!("exhaustive ML over 4^{} vectors", m.n_u));
                }
            }
        }
        Ok(())
    }

    pub fn gmm_obstacles(&self) -> Result<ObstacleSet> {
        Ok(ObstacleSet::with_cap(self.gmm.obstacles.clone(), self.gmm.beta_cap)?
            .with_cap_mode(self.gmm.cap_mode))
    }

    fn gmm_box(&self) -> Result<AxisBox> {
        AxisBox::cube(2, self.gmm.box_lo, self.gmm.box_hi)
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    // tagged enums are replaced whole so variant fields never mix
                    Some(slot) if slot.is_object() && !v.get("kind").is_some() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

// ---------------------------------------------------------------- GMM study

/// One α run of the mixture study.
#[derive(Debug, Clone)]
pub struct GmmRun {
    pub alpha: f64,
    pub chains: Vec<ChainResult>,
    pub stats: SampleStats,
    pub mean_mode_distance: f64,
    pub infeasible_step_fraction: f64,
    /// TV distance to the exact constrained reference, when computed.
    pub tv_to_oracle: Option<f64>,
}

impl GmmRun {
    pub fn samples(&self) -> Vec<Vec<f64>> {
        self.chains.iter().flat_map(|c| c.samples.iter().cloned()).collect()
    }
}

pub struct GmmReport {
    pub runs: Vec<GmmRun>,
    pub potential_offset: f64,
}

pub fn gmm_study(cfg: &ExperimentConfig) -> Result<GmmReport> {
    let g = &cfg.gmm;
    let gmm = g.target.build()?;
    let obstacles = cfg.gmm_obstacles()?;
    let hbox = cfg.gmm_box()?;
    let offset = calibrate_offset(&gmm, &hbox, g.offset_probes)?;
    let reference = if g.oracle_draws > 0 {
        let mut rng = chain_rng(cfg.sampler.seed, u64::MAX);
        Some(rejection_oracle(&gmm, &obstacles, g.oracle_draws, &mut rng)?)
    } else {
        None
    };
    let mut runs = Vec::with_capacity(g.alphas.len());
    for &alpha in &g.alphas {
        let view = PotentialView::new(&gmm, offset)?;
        let dynamics = Dynamics::new(&gmm, Some(&view), &obstacles);
        let scfg = SamplerConfig { alpha, ..cfg.sampler.clone() };
        let chains = run_ensemble(&g.init, StepRule::Shielded, &scfg, &dynamics, g.n_chains)?;
        let samples: Vec<Vec<f64>> =
            chains.iter().flat_map(|c| c.samples.iter().cloned()).collect();
        let stats = SampleStats::compute(
            &samples,
            &obstacles,
            gmm.means(),
            g.assign_radius,
            g.boundary_delta,
            &hbox,
            g.hist_bins,
        )?;
        let steps: usize = chains.iter().map(|c| c.n_steps).sum();
        let infeasible: usize = chains.iter().map(|c| c.n_infeasible_steps).sum();
        let tv_to_oracle = match &reference {
            Some(r) if !samples.is_empty() => Some(histogram_tv(&samples, r, &hbox, g.hist_bins)?),
            _ => None,
        };
        runs.push(GmmRun {
            alpha,
            mean_mode_distance: mean_distance_to_nearest_mode(&samples, gmm.means()),
            infeasible_step_fraction: infeasible as f64 / steps.max(1) as f64,
            tv_to_oracle,
            chains,
            stats,
        });
    }
    Ok(GmmReport { runs, potential_offset: offset })
}

/// Writes `samples_<alpha>.csv`, `stats.csv`, optional scatter plots and the
/// manifest into `out`.
pub fn run_gmm(cfg: &ExperimentConfig, out: &Path) -> Result<GmmReport> {
    let report = gmm_study(cfg)?;
    let obstacles = cfg.gmm_obstacles()?;
    create_dir(out)?;
    for run in &report.runs {
        let path = out.join(format!("samples_{}.csv", run.alpha));
        let mut w = csv_writer(&path)?;
        write_row(&mut w, &path, ["step", "x1", "x2", "beta", "feasible"].map(String::from))?;
        for chain in &run.chains {
            for (step, x) in chain.sample_steps.iter().zip(&chain.samples) {
                let beta = obstacles.beta_raw(x)?;
                let feasible = if obstacles.is_feasible(x) { "1" } else { "0" };
                write_row(
                    &mut w,
                    &path,
                    [
                        step.to_string(),
                        x[0].to_string(),
                        x[1].to_string(),
                        beta.to_string(),
                        feasible.into(),
                    ],
                )?;
            }
        }
        finish(w, &path)?;
    }

    let path = out.join("stats.csv");
    let mut w = csv_writer(&path)?;
    let n_modes = cfg.gmm.target.means.len();
    let mut header: Vec<String> =
        ["run_id", "alpha", "tau", "feasibility_rate"].map(String::from).into();
    header.extend((1..=n_modes).map(|k| format!("mode_{k}_fraction")));
    header.extend(
        ["boundary_fraction", "mean_mode_distance", "infeasible_step_fraction", "tv_to_oracle"]
            .map(String::from),
    );
    write_row(&mut w, &path, header)?;
    for (i, run) in report.runs.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            run.alpha.to_string(),
            cfg.sampler.tau.to_string(),
            run.stats.feasibility_rate.to_string(),
        ];
        row.extend(run.stats.mode_occupancy.iter().map(|v| v.to_string()));
        row.push(run.stats.boundary_fraction.to_string());
        row.push(run.mean_mode_distance.to_string());
        row.push(run.infeasible_step_fraction.to_string());
        row.push(run.tv_to_oracle.map(|v| v.to_string()).unwrap_or_default());
        write_row(&mut w, &path, row)?;
    }
    finish(w, &path)?;

    if cfg.output.plot {
        for run in &report.runs {
            let svg = scatter_svg(cfg, run)?;
            write_file(&out.join(format!("scatter_{}.svg", run.alpha)), svg.as_bytes())?;
        }
    }
    write_manifest(cfg, out)?;
    Ok(report)
}

fn scatter_svg(cfg: &ExperimentConfig, run: &GmmRun) -> Result<String> {
    let (lo, hi) = (cfg.gmm.box_lo, cfg.gmm.box_hi);
    let mut plot = Plot::new(500.0, 500.0, (lo, hi), (lo, hi));
    let samples = run.samples();
    let stride = (samples.len() / 5_000).max(1);
    let pts: Vec<(f64, f64)> = samples.iter().step_by(stride).map(|s| (s[0], s[1])).collect();
    plot.points(&pts, 1.2, "steelblue", 0.4);
    for o in &cfg.gmm.obstacles {
        if let Obstacle::Sphere { center, radius } = o {
            plot.circle((center[0], center[1]), *radius, "firebrick");
        }
    }
    for m in &cfg.gmm.target.means {
        plot.marker((m[0], m[1]), "black");
    }
    plot.label(50.0, 25.0, &format!("alpha = {}, tau = {}", run.alpha, cfg.sampler.tau), "black");
    Ok(plot.render())
}

// ------------------------------------------------------------ naive ablation

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationRow {
    pub seed: u64,
    pub naive_fraction: f64,
    pub shielded_fraction: f64,
}

/// Infeasible-step fractions of naive and shielded ensembles on shared
/// seeds and chain streams.
pub fn naive_ablation_study(cfg: &ExperimentConfig) -> Result<Vec<ViolationRow>> {
    let gmm = cfg.gmm.target.build()?;
    let obstacles = cfg.gmm_obstacles()?;
    let offset = calibrate_offset(&gmm, &cfg.gmm_box()?, cfg.gmm.offset_probes)?;
    let view = PotentialView::new(&gmm, offset)?;
    let dynamics = Dynamics::new(&gmm, Some(&view), &obstacles);
    let n = &cfg.naive;
    let fraction = |chains: &[ChainResult]| {
        let bad: usize = chains.iter().map(|c| c.n_infeasible_steps).sum();
        let all: usize = chains.iter().map(|c| c.n_steps).sum();
        bad as f64 / all.max(1) as f64
    };
    (0..n.seeds as u64)
        .map(|s| {
            let seed = cfg.sampler.seed.wrapping_add(s);
            let scfg = SamplerConfig {
                seed,
                n_steps: n.n_steps,
                burn_in: 0,
                record_every: n.n_steps.max(1),
                repulsion: Repulsion::Exact,
                ..cfg.sampler.clone()
            };
            let naive = run_ensemble(&cfg.gmm.init, StepRule::Naive, &scfg, &dynamics, n.n_chains)?;
            let shielded =
                run_ensemble(&cfg.gmm.init, StepRule::Shielded, &scfg, &dynamics, n.n_chains)?;
            Ok(ViolationRow {
                seed,
                naive_fraction: fraction(&naive),
                shielded_fraction: fraction(&shielded),
            })
        })
        .collect()
}

pub fn run_naive_ablation(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ViolationRow>> {
    let rows = naive_ablation_study(cfg)?;
    create_dir(out)?;
    let path = out.join("violation.csv");
    let mut w = csv_writer(&path)?;
    write_row(
        &mut w,
        &path,
        ["seed", "naive_infeasible_fraction", "shielded_infeasible_fraction", "naive_exceeds"]
            .map(String::from),
    )?;
    for r in &rows {
        write_row(
            &mut w,
            &path,
            [
                r.seed.to_string(),
                r.naive_fraction.to_string(),
                r.shielded_fraction.to_string(),
                (r.naive_fraction > r.shielded_fraction).to_string(),
            ],
        )?;
    }
    finish(w, &path)?;
    write_manifest(cfg, out)?;
    Ok(rows)
}

// --------------------------------------------------------------- MIMO study

/// A detector evaluated by the MIMO sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Detector {
    Ml,
    Ula,
    /// Shielded detector with the given repulsion parameter.
    Shielded(f64),
}

impl Detector {
    pub fn name(&self) -> &'static str {
        match self {
            Detector::Ml => "ml",
            Detector::Ula => "ula",
            Detector::Shielded(_) => "shielded",
        }
    }

    pub fn alpha_bar(&self) -> Option<f64> {
        match self {
            Detector::Shielded(a) => Some(*a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerRow {
    pub detector: Detector,
    pub snr_db: f64,
    pub trials: usize,
    pub symbol_errors: usize,
    /// Instances with at least one wrong symbol.
    pub failed_instances: usize,
    pub ser: f64,
}

pub struct MimoReport {
    /// Rows grouped by SNR, detectors in the order ML, ULA, shielded per ᾱ.
    pub rows: Vec<SerRow>,
    /// Instances where some Langevin detector reached a smaller residual
    /// than exhaustive ML. Zero whenever ML is exact.
    pub ml_dominance_violations: usize,
    pub n_u: usize,
    /// `(snr_db, instance)` pairs, filled only when `dump_instances` is set.
    pub instances: Vec<(f64, MimoInstance)>,
}

impl MimoReport {
    pub fn row(&self, detector: Detector, snr_db: f64) -> Option<&SerRow> {
        self.rows.iter().find(|r| r.detector == detector && r.snr_db == snr_db)
    }
}

/// The detectors a MIMO block evaluates.
pub fn mimo_detectors(m: &MimoBlock) -> Vec<Detector> {
    let mut d = vec![Detector::Ml, Detector::Ula];
    d.extend(m.alpha_bars.iter().map(|a| Detector::Shielded(*a)));
    d
}

struct InstanceOutcome {
    errors: Vec<usize>,
    dominance_violation: bool,
    instance: Option<MimoInstance>,
}

/// Instance `t` at SNR index `si` uses stream `u64::MAX` of
/// `instance_seed(seed, si·trials + t)` for its draw and the low streams of
/// the same seed for its detector chains.
pub fn mimo_instance(
    m: &MimoBlock,
    constellation: &Constellation,
    seed: u64,
    snr_index: usize,
    trial: usize,
) -> Result<MimoInstance> {
    let idx = (snr_index * m.trials + trial) as u64;
    let mut rng: ChaCha8Rng = chain_rng(instance_seed(seed, idx), u64::MAX);
    MimoInstance::generate(m.n_r, m.n_u, constellation, m.snr_db[snr_index], &mut rng)
}

pub fn mimo_study(cfg: &ExperimentConfig) -> Result<MimoReport> {
    let m = &cfg.mimo;
    let constellation = Constellation::qpsk();
    let schedule = m.schedule()?;
    let obstacles = m.obstacles(&constellation)?;
    let detectors = mimo_detectors(m);
    let seed = cfg.sampler.seed;
    let mut rows = Vec::new();
    let mut violations = 0;
    let mut instances = Vec::new();
    for (si, &snr) in m.snr_db.iter().enumerate() {
        let outcomes: Vec<InstanceOutcome> = (0..m.trials)
            .into_par_iter()
            .map(|t| -> Result<InstanceOutcome> {
                let inst = mimo_instance(m, &constellation, seed, si, t)?;
                let idx = (si * m.trials + t) as u64;
                let ml = detect_ml_exhaustive(&inst, &constellation)?;
                let ml_res = inst.residual(&ml);
                let mut errors = Vec::with_capacity(detectors.len());
                let mut violation = false;
                for det in &detectors {
                    let x_hat = match det {
                        Detector::Ml => ml.clone(),
                        Detector::Ula => {
                            let d = detect_langevin(
                                &inst,
                                &schedule,
                                &ObstacleSet::empty(),
                                &cfg.sampler,
                                &constellation,
                                m.n_candidates,
                                seed,
                                idx,
                            )?;
                            violation |= d.residual < ml_res;
                            d.x_hat
                        }
                        Detector::Shielded(a) => {
                            let repulsion = match m.repulsion {
                                MimoRepulsion::AlphaBar => Repulsion::Constant { alpha_bar: *a },
                                MimoRepulsion::Exact => Repulsion::Exact,
                            };
                            let scfg =
                                SamplerConfig { repulsion, alpha: *a, ..cfg.sampler.clone() };
                            let d = detect_langevin(
                                &inst,
                                &schedule,
                                &obstacles,
                                &scfg,
                                &constellation,
                                m.n_candidates,
                                seed,
                                idx,
                            )?;
                            violation |= d.residual < ml_res;
                            d.x_hat
                        }
                    };
                    errors.push(symbol_errors(&x_hat, &inst.x_true, m.n_u));
                }
                Ok(InstanceOutcome {
                    errors,
                    dominance_violation: violation,
                    instance: m.dump_instances.then_some(inst),
                })
            })
            .collect::<Result<_>>()?;
        violations += outcomes.iter().filter(|o| o.dominance_violation).count();
        for (k, det) in detectors.iter().enumerate() {
            let symbol_errors: usize = outcomes.iter().map(|o| o.errors[k]).sum();
            let failed_instances = outcomes.iter().filter(|o| o.errors[k] > 0).count();
            rows.push(SerRow {
                detector: *det,
                snr_db: snr,
                trials: m.trials,
                symbol_errors,
                failed_instances,
                ser: symbol_errors as f64 / (m.trials * m.n_u) as f64,
            });
        }
        instances.extend(outcomes.into_iter().filter_map(|o| o.instance).map(|i| (snr, i)));
    }
    Ok(MimoReport { rows, ml_dominance_violations: violations, n_u: m.n_u, instances })
}

pub fn run_mimo(cfg: &ExperimentConfig, out: &Path) -> Result<MimoReport> {
    let report = mimo_study(cfg)?;
    create_dir(out)?;
    let path = out.join("ser.csv");
    let mut w = csv_writer(&path)?;
    write_row(
        &mut w,
        &path,
        ["detector", "alpha_bar", "snr_db", "trials", "symbol_errors", "ser"].map(String::from),
    )?;
    for r in &report.rows {
        write_row(
            &mut w,
            &path,
            [
                r.detector.name().to_string(),
                r.detector.alpha_bar().map(|a| a.to_string()).unwrap_or_default(),
                r.snr_db.to_string(),
                r.trials.to_string(),
                r.symbol_errors.to_string(),
                r.ser.to_string(),
            ],
        )?;
    }
    finish(w, &path)?;

    if cfg.mimo.dump_instances {
        let rows: Vec<(u64, f64, &MimoInstance)> =
            report.instances.iter().map(|(snr, i)| (cfg.sampler.seed, *snr, i)).collect();
        let path = out.join("instances.csv");
        let file = fs::File::create(&path)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        write_instances_csv(file, &rows).map_err(|e| csv_io(&path, e))?;
    }
    if cfg.output.plot {
        write_file(&out.join("ser.svg"), ser_svg(cfg, &report).as_bytes())?;
    }
    write_manifest(cfg, out)?;
    Ok(report)
}

fn ser_svg(cfg: &ExperimentConfig, report: &MimoReport) -> String {
    let snrs = &cfg.mimo.snr_db;
    let lo = snrs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = snrs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x_range = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let mut plot = Plot::new(600.0, 420.0, x_range, (0.0, 1.0));
    let colors = ["black", "darkorange", "steelblue", "seagreen", "purple", "firebrick"];
    for (k, det) in mimo_detectors(&cfg.mimo).iter().enumerate() {
        let pts: Vec<(f64, f64)> =
            snrs.iter().filter_map(|s| report.row(*det, *s).map(|r| (*s, r.ser))).collect();
        let color = colors[k % colors.len()];
        plot.polyline(&pts, color);
        let name = match det.alpha_bar() {
            Some(a) => format!("shielded {a}"),
            None => det.name().to_string(),
        };
        plot.label(480.0, 60.0 + 16.0 * k as f64, &name, color);
    }
    plot.label(250.0, 25.0, "SER vs SNR (dB)", "black");
    plot.render()
}

// ------------------------------------------------------------------- output

/// Per-run record written next to the artifacts.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    artifact: &'static str,
    version: &'static str,
    experiment: &'static str,
    seed: u64,
    config: &'a ExperimentConfig,
}

fn write_manifest(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let m = Manifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment.name(),
        seed: cfg.sampler.seed,
        config: cfg,
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
    write_file(&out.join("manifest.json"), text.as_bytes())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_io(path, e))
}

fn write_row<I>(w: &mut csv::Writer<fs::File>, path: &Path, row: I) -> Result<()>
where
    I: IntoIterator<Item = String>,
{
    w.write_record(row).map_err(|e| csv_io(path, e))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    Error::Io { path: path.display().to_string(), source }
}

/// Runs whichever study `cfg.experiment` selects, writing into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    match cfg.experiment {
        ExperimentKind::Gmm => run_gmm(cfg, out).map(|_| ()),
        ExperimentKind::Mimo => run_mimo(cfg, out).map(|_| ()),
        ExperimentKind::NaiveAblation => run_naive_ablation(cfg, out).map(|_| ()),
    }
}
