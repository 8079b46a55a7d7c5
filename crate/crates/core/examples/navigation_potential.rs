//! Evaluates the navigation potential and the shielded drift along a line
//! that passes through an obstacle.

use shielded_lmc::obstacle::{Obstacle, ObstacleSet};
use shielded_lmc::sampler::{rk_potential, shielded_drift, Dynamics, Repulsion, SamplerConfig};
use shielded_lmc::target::{calibrate_offset, AxisBox, GaussianMixture, PotentialView};

fn main() -> shielded_lmc::Result<()> {
    let gmm = GaussianMixture::planar_benchmark();
    let obstacles =
        ObstacleSet::with_cap(vec![Obstacle::sphere(vec![-1.0, 1.0], 0.4)?], Some(5.0))?;
    let offset = calibrate_offset(&gmm, &AxisBox::cube(2, -6.0, 6.0)?, 10_000)?;
    let view = PotentialView::new(&gmm, offset)?;
    let dynamics = Dynamics::new(&gmm, Some(&view), &obstacles);
    let cfg = SamplerConfig { repulsion: Repulsion::Exact, ..SamplerConfig::default() };

    println!("   x1      beta    phi(a=1)  phi(a=7)  drift");
    for i in 0..=16 {
        let x = [-2.0 + 0.125 * i as f64, 1.0];
        let beta = obstacles.beta_aggregate(&x)?;
        if beta < 0.0 {
            println!("{:6.3}  {:8.4}  inside obstacle", x[0], beta);
            continue;
        }
        let u = view.potential_value(&x)?;
        let d = shielded_drift(&x, &dynamics, &cfg)?;
        println!(
            "{:6.3}  {:8.4}  {:8.4}  {:8.4}  [{:+.3}, {:+.3}]",
            x[0],
            beta,
            rk_potential(u, beta, 1.0)?,
            rk_potential(u, beta, 7.0)?,
            d.drift[0],
            d.drift[1]
        );
    }
    Ok(())
}
