use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spatreg::quad;
use spatreg::smoothing::{PenaltyOrder, SplineSmoother};

const REPLICATES: usize = 200;

fn noisy_sine(smoother: &SplineSmoother, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise = Normal::new(0.0, 0.004f64.sqrt()).unwrap();
    smoother.times().iter().map(|t| (PI * t).sin() + noise.sample(rng)).collect()
}

#[test]
fn cubic_fit_of_noisy_sine_is_close() {
    let times = quad::uniform_grid(100);
    let smoother = SplineSmoother::new(&times, PenaltyOrder::Cubic).unwrap();
    let grid = quad::uniform_grid(1001);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let good = (0..REPLICATES)
        .filter(|_| {
            let fit = smoother.fit(&noisy_sine(&smoother, &mut rng)).unwrap();
            let mse = grid.iter().map(|&t| (fit.eval(t) - (PI * t).sin()).powi(2)).sum::<f64>() / grid.len() as f64;
            mse.sqrt() < 0.05
        })
        .count();
    assert!(good * 100 >= 95 * REPLICATES, "{good}/{REPLICATES}");
}

#[test]
fn quintic_derivative_of_noisy_sine_is_close() {
    let times = quad::uniform_grid(100);
    let smoother = SplineSmoother::new(&times, PenaltyOrder::Quintic).unwrap();
    let grid: Vec<f64> = quad::uniform_grid(1001).into_iter().filter(|t| (0.05..=0.95).contains(t)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let good = (0..REPLICATES)
        .filter(|_| {
            let d = smoother.fit(&noisy_sine(&smoother, &mut rng)).unwrap().derivative();
            grid.iter().map(|&t| (d.eval(t) - PI * (PI * t).cos()).abs()).fold(0.0, f64::max) < 0.5
        })
        .count();
    assert!(good * 100 >= 90 * REPLICATES, "{good}/{REPLICATES}");
}
