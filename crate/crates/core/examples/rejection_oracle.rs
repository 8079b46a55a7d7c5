//! Exact constrained samples by rejection, and the histogram distance
//! between two independent reference sets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shielded_lmc::diagnostics::{feasibility_rate, histogram_tv, rejection_oracle};
use shielded_lmc::obstacle::{Obstacle, ObstacleSet};
use shielded_lmc::target::{AxisBox, GaussianMixture};

fn main() -> shielded_lmc::Result<()> {
    let gmm = GaussianMixture::planar_benchmark();
    let obstacles = ObstacleSet::new(vec![
        Obstacle::sphere(vec![-1.0, 1.0], 0.4)?,
        Obstacle::sphere(vec![-1.0, 0.1], 0.4)?,
    ])?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = rejection_oracle(&gmm, &obstacles, 50_000, &mut rng)?;
    let b = rejection_oracle(&gmm, &obstacles, 50_000, &mut rng)?;
    let hbox = AxisBox::cube(2, -6.0, 6.0)?;
    println!("feasible fraction {}", feasibility_rate(&a, &obstacles));
    println!("tv between two reference sets (20x20 bins): {:.4}", histogram_tv(&a, &b, &hbox, 20)?);
    Ok(())
}
