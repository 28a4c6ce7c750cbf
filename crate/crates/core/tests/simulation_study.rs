use spatreg::quad;
use spatreg::registration;
use spatreg::simulation::{self, Scheme, SimConfig};
use spatreg::smoothing::{PenaltyOrder, SplineSmoother};

fn ratio(scheme: Scheme, psi: f64, seed: u64) -> f64 {
    let res = simulation::run_experiment(&SimConfig::new(scheme, psi, 300, seed)).unwrap();
    assert!(!res.incomplete);
    res.rows[1].avg_mse / res.rows[0].avg_mse
}

#[test]
fn independence_limit_modes_agree() {
    let r = ratio(Scheme::A, 0.03, 2);
    assert!((r - 1.0).abs() <= 0.05, "{r}");
}

#[test]
fn clustered_design_gains_from_spatial_weights() {
    let r = ratio(Scheme::C, 0.1, 2);
    assert!((0.48..=0.78).contains(&r), "{r}");
}

#[test]
fn half_width_shrinks_with_replicates() {
    let hw = |reps| {
        let res = simulation::run_experiment(&SimConfig::new(Scheme::A, 0.1, reps, 3)).unwrap();
        res.rows[0].ci95_halfwidth
    };
    let shrink = hw(400) / hw(200);
    assert!((shrink / std::f64::consts::FRAC_1_SQRT_2 - 1.0).abs() <= 0.2, "{shrink}");
}

fn mean_pairwise_distance(curves: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..curves.len() {
        for k in i + 1..curves.len() {
            let sq: Vec<f64> = curves[i].iter().zip(&curves[k]).map(|(a, b)| (a - b).powi(2)).collect();
            total += quad::trapezoid(&sq).sqrt();
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn alignment_brings_curves_together() {
    let mut config = SimConfig::new(Scheme::B, 0.3, 20, 4);
    config.registration.align = true;
    config.registration.normalize = true;
    let g = config.registration.grid;
    let grid = quad::uniform_grid(g);
    let (mut aligned_total, mut raw_total) = (0.0, 0.0);
    for attempt in 0..20 {
        let rep = simulation::simulate_replicate(&config, attempt).unwrap();
        let res = registration::register(&rep.curves, Some(&rep.distances), registration::Mode::Spatial, &config.registration)
            .or_else(|_| registration::register(&rep.curves, None, registration::Mode::Nonspatial, &config.registration))
            .unwrap();
        aligned_total += mean_pairwise_distance(res.aligned.as_ref().unwrap());
        let smoother = SplineSmoother::new(rep.curves[0].times(), PenaltyOrder::Cubic).unwrap();
        let raw: Vec<Vec<f64>> = rep
            .curves
            .iter()
            .map(|c| {
                let fit = smoother.fit(c.values()).unwrap().l2_normalize().unwrap();
                grid.iter().map(|&t| fit.eval(t)).collect()
            })
            .collect();
        raw_total += mean_pairwise_distance(&raw);
    }
    assert!(aligned_total < raw_total, "aligned {aligned_total} vs unaligned {raw_total}");
}
