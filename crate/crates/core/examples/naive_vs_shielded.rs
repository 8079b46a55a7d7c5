//! Compares how often naive navigation-potential Langevin and the shielded
//! sampler end a step inside an obstacle.

use shielded_lmc::experiment::{naive_ablation_study, ExperimentConfig, ExperimentKind};

fn main() -> shielded_lmc::Result<()> {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::NaiveAblation);
    cfg.naive.seeds = 3;
    cfg.naive.n_chains = 16;
    cfg.naive.n_steps = 10_000;
    println!("seed  naive      shielded");
    for row in naive_ablation_study(&cfg)? {
        println!("{:<5} {:<10.2e} {:.2e}", row.seed, row.naive_fraction, row.shielded_fraction);
    }
    Ok(())
}
