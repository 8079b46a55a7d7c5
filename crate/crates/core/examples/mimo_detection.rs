//! Symbol error rates of exhaustive ML, annealed Langevin and shielded
//! annealed Langevin on a small QPSK MIMO link.

use shielded_lmc::experiment::{mimo_study, ExperimentConfig, ExperimentKind};

fn main() -> shielded_lmc::Result<()> {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Mimo);
    cfg.mimo.n_u = 4;
    cfg.mimo.n_r = 4;
    cfg.mimo.trials = 100;
    cfg.mimo.snr_db = vec![5.0, 15.0];
    cfg.mimo.alpha_bars = vec![10.0, 100.0];
    let report = mimo_study(&cfg)?;
    println!("detector        snr  ser");
    for row in &report.rows {
        println!("{:<15} {:<4} {:.4}", format!("{:?}", row.detector), row.snr_db, row.ser);
    }
    Ok(())
}
