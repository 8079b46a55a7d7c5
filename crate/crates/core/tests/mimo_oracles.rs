use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shielded_lmc::mimo::{
    annealed_chain, detect_langevin, detect_ml_exhaustive, gen_channel, lift_real,
    likelihood_score, noise_variance_from_snr, symbol_errors, symbol_obstacles, AnnealSchedule,
    Constellation, MimoInstance,
};
use shielded_lmc::obstacle::{CapMode, ObstacleSet};
use shielded_lmc::sampler::{chain_rng, Repulsion, SamplerConfig};

fn instance(n: usize, snr_db: f64, seed: u64) -> MimoInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MimoInstance::generate(n, n, &Constellation::qpsk(), snr_db, &mut rng).unwrap()
}

fn schedule() -> AnnealSchedule {
    AnnealSchedule::geometric(0.84, 0.01, 5, 40, 0.3).unwrap()
}

fn shielded_cfg(alpha_bar: f64) -> SamplerConfig {
    SamplerConfig {
        tau: 1.0,
        repulsion: Repulsion::Constant { alpha_bar },
        ..SamplerConfig::default()
    }
}

/// Brute-force ML over all QPSK vectors of length two with complex arithmetic.
fn nested_loop_ml(h: &DMatrix<Complex<f64>>, y: &DVector<Complex<f64>>) -> Vec<(f64, f64)> {
    let q = Constellation::qpsk().points;
    let mut best = (f64::INFINITY, vec![]);
    for a in &q {
        for b in &q {
            let x = [Complex::new(a.0, a.1), Complex::new(b.0, b.1)];
            let mut r = 0.0;
            for i in 0..h.nrows() {
                r += (y[i] - h[(i, 0)] * x[0] - h[(i, 1)] * x[1]).norm_sqr();
            }
            if r < best.0 {
                best = (r, vec![*a, *b]);
            }
        }
    }
    best.1
}

#[test]
fn channel_entries_have_variance_one_over_receivers() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    let mut count = 0;
    while count < 10_000 {
        let h = gen_channel(8, 8, &mut rng);
        total += h.iter().map(|z| z.norm_sqr()).sum::<f64>();
        count += 64;
    }
    let mean = total / count as f64;
    assert!((mean - 0.125).abs() < 0.03 * 0.125, "E|h|^2 = {mean}");
}

#[test]
fn snr_calibration_matches_empirical_power_ratio() {
    let q = Constellation::qpsk();
    let (mut signal, mut noise) = (0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..4000 {
        let inst = MimoInstance::generate(4, 4, &q, 10.0, &mut rng).unwrap();
        let hx = &inst.h_real * DVector::from_column_slice(&inst.x_true);
        signal += hx.norm_squared();
        noise += inst.residual(&inst.x_true);
    }
    let snr_db = 10.0 * (signal / noise).log10();
    assert!((snr_db - 10.0).abs() < 0.2, "empirical SNR {snr_db} dB");
    assert!((noise_variance_from_snr(4, 4, &q, 10.0) - q.symbol_energy() / 10.0).abs() < 1e-12);
}

#[test]
fn exhaustive_ml_matches_nested_loops() {
    let q = Constellation::qpsk();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let h = gen_channel(3, 2, &mut rng);
        let x = DVector::from_fn(2, |i, _| {
            let p = q.points[(i * 3 + 1) % 4];
            Complex::new(p.0, p.1)
        });
        let n = DVector::from_fn(3, |_, _| {
            Complex::new(0.4 * rand::Rng::random::<f64>(&mut rng) - 0.2, 0.0)
        });
        let y = &h * &x + n;
        let expected = nested_loop_ml(&h, &y);
        let (hr, xr) = lift_real(&h, &x).unwrap();
        let yr = DVector::from_fn(6, |i, _| if i < 3 { y[i].re } else { y[i - 3].im });
        let inst =
            MimoInstance::new(hr, 0.1, xr.as_slice().to_vec(), yr.as_slice().to_vec()).unwrap();
        let ml = detect_ml_exhaustive(&inst, &q).unwrap();
        let got = vec![(ml[0], ml[2]), (ml[1], ml[3])];
        assert_eq!(got, expected);
    }
}

#[test]
fn ml_residual_is_never_beaten_by_langevin() {
    let q = Constellation::qpsk();
    let cylinders = symbol_obstacles(4, 0.5, &q).unwrap();
    let obstacles = ObstacleSet::with_cap(cylinders.obstacles().to_vec(), Some(0.25))
        .unwrap()
        .with_cap_mode(CapMode::PerFactor);
    for trial in 0..10 {
        let inst = instance(4, 5.0, 100 + trial);
        let ml = detect_ml_exhaustive(&inst, &q).unwrap();
        let ml_r = inst.residual(&ml);
        for set in [ObstacleSet::empty(), obstacles.clone()] {
            let det =
                detect_langevin(&inst, &schedule(), &set, &shielded_cfg(100.0), &q, 4, 3, trial)
                    .unwrap();
            assert!(ml_r <= det.residual + 1e-12, "trial {trial}: {ml_r} > {}", det.residual);
        }
    }
}

#[test]
fn best_of_candidates_is_the_minimum_residual() {
    let q = Constellation::qpsk();
    let inst = instance(8, 5.0, 77);
    let ten = detect_langevin(
        &inst,
        &schedule(),
        &ObstacleSet::empty(),
        &shielded_cfg(1.0),
        &q,
        10,
        5,
        0,
    )
    .unwrap();
    let residuals: Vec<f64> = ten.candidate_residuals.iter().map(|r| r.unwrap()).collect();
    let min = residuals.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(ten.residual, min);
    assert_eq!(inst.residual(&ten.x_hat), min);
    // candidate c uses the same stream whatever the candidate count, so
    // more candidates can only lower the best residual
    let one =
        detect_langevin(&inst, &schedule(), &ObstacleSet::empty(), &shielded_cfg(1.0), &q, 1, 5, 0)
            .unwrap();
    assert_eq!(one.candidate_residuals[0], ten.candidate_residuals[0]);
    assert!(ten.residual <= one.residual);
}

#[test]
fn empty_set_annealed_chain_is_the_unconstrained_baseline() {
    let q = Constellation::qpsk();
    let inst = instance(4, 10.0, 5);
    let ula_cfg = SamplerConfig { tau: 1.0, ..SamplerConfig::default() };
    let a = annealed_chain(
        &inst,
        &schedule(),
        &ObstacleSet::empty(),
        &ula_cfg,
        &q,
        &mut chain_rng(1, 0),
    )
    .unwrap();
    let b = annealed_chain(
        &inst,
        &schedule(),
        &ObstacleSet::empty(),
        &shielded_cfg(500.0),
        &q,
        &mut chain_rng(1, 0),
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn likelihood_score_vanishes_at_the_truth_without_noise() {
    let q = Constellation::qpsk();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = gen_channel(4, 4, &mut rng);
    let x = DVector::from_fn(4, |i, _| Complex::new(q.points[i].0, q.points[i].1));
    let y = &h * &x;
    let (hr, xr) = lift_real(&h, &x).unwrap();
    let yr = DVector::from_fn(8, |i, _| if i < 4 { y[i].re } else { y[i - 4].im });
    let inst = MimoInstance::new(hr, 1e-4, xr.as_slice().to_vec(), yr.as_slice().to_vec()).unwrap();
    let s = likelihood_score(&inst.x_true, &inst, 0.1).unwrap();
    assert!(s.iter().all(|v| v.abs() < 1e-9), "{s:?}");
    assert_eq!(detect_ml_exhaustive(&inst, &q).unwrap(), inst.x_true);
}

#[test]
fn symbol_error_count_examples() {
    let truth = [0.7, -0.7, 0.7, 0.7];
    assert_eq!(symbol_errors(&truth, &truth, 2), 0);
    // one wrong real part and one wrong imaginary part on the same symbol
    assert_eq!(symbol_errors(&[-0.7, -0.7, -0.7, 0.7], &truth, 2), 1);
    assert_eq!(symbol_errors(&[-0.7, 0.7, 0.7, -0.7], &truth, 2), 2);
}

#[test]
fn obstacle_radius_must_stay_inside_the_constellation() {
    let q = Constellation::qpsk();
    assert!(symbol_obstacles(2, 0.5, &q).is_ok());
    assert!(symbol_obstacles(2, 0.0, &q).is_err());
    assert!(symbol_obstacles(2, 0.8, &q).is_err());
}
