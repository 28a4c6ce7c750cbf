//! Monte-Carlo comparison of spatial and non-spatial registration on
//! synthetic data with spatially correlated warps.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::embed::{embedded_distances, DistanceMatrix, Embedding};
use crate::error::{Error, Result};
use crate::quad;
use crate::registration::{self, Mode, RegistrationOptions};
use crate::smoothing::SampledCurve;
use crate::special::normal_cdf;
use crate::variogram::{FitOptions, ModelKind};
use crate::warp::MonotoneMap;

/// Spatial sampling design for the 36 locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// 6×6 regular grid.
    A,
    /// Uniform on the unit square.
    B,
    /// Concentrated around the centre.
    C,
    /// One isolated point and two Gaussian clusters.
    D,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::A, Scheme::B, Scheme::C, Scheme::D];

    fn index(self) -> u64 {
        match self {
            Scheme::A => 0,
            Scheme::B => 1,
            Scheme::C => 2,
            Scheme::D => 3,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::A => "A",
            Scheme::B => "B",
            Scheme::C => "C",
            Scheme::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scheme::A),
            "B" => Ok(Scheme::B),
            "C" => Ok(Scheme::C),
            "D" => Ok(Scheme::D),
            other => Err(Error::validation(format!("unknown scheme {other:?}, expected A, B, C or D"))),
        }
    }
}

pub const LOCATIONS: usize = 36;

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub psi: f64,
    pub replicates: usize,
    pub times: usize,
    pub amplitude_mean: f64,
    pub amplitude_var: f64,
    pub noise_var: f64,
    pub nugget: f64,
    pub seed: u64,
    /// Keep one location draw for every replicate (always the case for scheme A).
    pub freeze_locations: bool,
    pub registration: RegistrationOptions,
}

impl SimConfig {
    pub fn new(scheme: Scheme, psi: f64, replicates: usize, seed: u64) -> Self {
        Self {
            scheme,
            psi,
            replicates,
            times: 100,
            amplitude_mean: 1.0,
            amplitude_var: 0.04,
            noise_var: 1.6e-5,
            nugget: 0.1,
            seed,
            freeze_locations: false,
            registration: RegistrationOptions {
                align: false,
                model: ModelKind::Exponential,
                fit: FitOptions {
                    max_range_factor: 1.0,
                    ..FitOptions::default()
                },
                ..RegistrationOptions::default()
            },
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.psi.is_finite() && self.psi > 0.0) {
            return Err(Error::validation(format!("psi must be positive, got {}", self.psi)));
        }
        if self.replicates == 0 {
            return Err(Error::validation("at least one replicate is required"));
        }
        if self.times < crate::smoothing::MIN_SAMPLES {
            return Err(Error::validation("too few time points"));
        }
        let positive = [self.amplitude_var, self.noise_var, self.nugget];
        if positive.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !self.amplitude_mean.is_finite() {
            return Err(Error::validation("variances must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Generator for one attempt; streams are independent across attempts.
    pub fn rng(&self, attempt: u64) -> ChaCha8Rng {
        let key = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(self.scheme.index().wrapping_mul(0xBF58_476D_1CE4_E5B9))
            ^ self.psi.to_bits().rotate_left(17);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(attempt);
        rng
    }
}

/// 36 locations in the unit square.
pub fn gen_locations<R: Rng + ?Sized>(scheme: Scheme, rng: &mut R) -> Vec<[f64; 2]> {
    let inside = |p: &[f64; 2]| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]);
    match scheme {
        Scheme::A => {
            let mut pts = Vec::with_capacity(LOCATIONS);
            for a in 1..=6 {
                for b in 1..=6 {
                    pts.push([(2 * a - 1) as f64 / 12.0, (2 * b - 1) as f64 / 12.0]);
                }
            }
            pts
        }
        Scheme::B => (0..LOCATIONS).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect(),
        Scheme::C => {
            let radius = Normal::<f64>::new(0.0, 0.2).expect("valid normal");
            (0..LOCATIONS)
                .map(|_| loop {
                    let r = radius.sample(rng).abs();
                    let theta = rng.random_range(0.0..std::f64::consts::TAU);
                    let p = [0.5 + r * theta.cos(), 0.5 + r * theta.sin()];
                    if inside(&p) {
                        break p;
                    }
                })
                .collect()
        }
        Scheme::D => {
            let mut pts = vec![[0.2, 0.2]];
            let clusters: [(usize, [f64; 2], [[f64; 2]; 2]); 2] = [
                (10, [0.8, 0.4], [[0.005, -0.005], [-0.005, 0.04]]),
                (25, [0.3, 0.7], [[0.008, -0.005], [-0.005, 0.008]]),
            ];
            for (count, mean, cov) in clusters {
                let l11 = cov[0][0].sqrt();
                let l21 = cov[1][0] / l11;
                let l22 = (cov[1][1] - l21 * l21).sqrt();
                for _ in 0..count {
                    let p = loop {
                        let z1: f64 = rng.sample(StandardNormal);
                        let z2: f64 = rng.sample(StandardNormal);
                        let p = [mean[0] + l11 * z1, mean[1] + l21 * z1 + l22 * z2];
                        if inside(&p) {
                            break p;
                        }
                    };
                    pts.push(p);
                }
            }
            pts
        }
    }
}

/// Location ids `s01`, `s02`, ...
pub fn location_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("s{i:02}")).collect()
}

/// Euclidean distances between planar locations.
pub fn planar_distances(ids: &[String], locations: &[[f64; 2]]) -> Result<DistanceMatrix> {
    let coords = DMatrix::from_fn(locations.len(), 2, |i, j| locations[i][j]);
    Ok(embedded_distances(&Embedding::from_coords(ids.to_vec(), coords)?))
}

/// Knot perturbations of one location's true warp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpKnots {
    pub zeta: [f64; 2],
    pub zeta_star: [f64; 2],
}

impl WarpKnots {
    pub fn from_zeta(zeta: [f64; 2]) -> Self {
        Self {
            zeta,
            zeta_star: zeta.map(|z| 0.25 * normal_cdf(z) - 0.125),
        }
    }

    /// Piecewise-linear `h⁻¹` through `(0,0)`, `(0.25−ζ₁*, 0.25+ζ₁*)`,
    /// `(0.75−ζ₂*, 0.75+ζ₂*)`, `(1,1)`.
    pub fn eval(&self, t: f64) -> f64 {
        let [a, b] = self.zeta_star;
        let xs = [0.0, 0.25 - a, 0.75 - b, 1.0];
        let ys = [0.0, 0.25 + a, 0.75 + b, 1.0];
        let t = t.clamp(0.0, 1.0);
        let k = if t < xs[1] { 0 } else if t < xs[2] { 1 } else { 2 };
        ys[k] + (t - xs[k]) * (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
    }

    pub fn to_map(&self, grid: usize) -> Result<MonotoneMap> {
        MonotoneMap::from_fn(grid, &|t: f64| self.eval(t))
    }
}

/// Multivariate normal draws with covariance `nugget·I + exp(−d/ψ)`.
fn correlated_normals<R: Rng + ?Sized>(d: &DistanceMatrix, psi: f64, nugget: f64, rng: &mut R, draws: usize) -> Result<Vec<DVector<f64>>> {
    let n = d.len();
    let cov = DMatrix::from_fn(n, n, |i, k| {
        let base = (-d.get(i, k) / psi).exp();
        if i == k {
            base + nugget
        } else {
            base
        }
    });
    let chol = match cov.clone().cholesky() {
        Some(c) => c,
        None => (cov + DMatrix::identity(n, n) * 1e-10)
            .cholesky()
            .ok_or_else(|| Error::Numerical("warp covariance is not positive definite".into()))?,
    };
    Ok((0..draws)
        .map(|_| {
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            chol.l() * z
        })
        .collect())
}

/// Correlated random warps `h_i⁻¹` for the given locations.
pub fn gen_true_warps<R: Rng + ?Sized>(
    d: &DistanceMatrix,
    psi: f64,
    nugget: f64,
    rng: &mut R,
) -> Result<Vec<WarpKnots>> {
    let z = correlated_normals(d, psi, nugget, rng, 2)?;
    Ok((0..d.len()).map(|i| WarpKnots::from_zeta([z[0][i], z[1][i]])).collect())
}

/// Noisy observations `ξ_i sin(π h_i⁻¹(t_j)) + ε_ij` at equispaced times.
pub fn gen_dataset<R: Rng + ?Sized>(ids: &[String], warps: &[WarpKnots], config: &SimConfig, rng: &mut R) -> Result<Vec<SampledCurve>> {
    let times = quad::uniform_grid(config.times);
    let amp = Normal::new(config.amplitude_mean, config.amplitude_var.sqrt())
        .map_err(|e| Error::validation(e.to_string()))?;
    let noise = Normal::new(0.0, config.noise_var.sqrt()).map_err(|e| Error::validation(e.to_string()))?;
    ids.iter()
        .zip(warps)
        .map(|(id, w)| {
            let xi = amp.sample(rng);
            let values = times
                .iter()
                .map(|&t| xi * (std::f64::consts::PI * w.eval(t)).sin() + noise.sample(rng))
                .collect();
            SampledCurve::new(id.clone(), times.clone(), values)
        })
        .collect()
}

/// Average squared L2 distance between paired maps.
pub fn mse(estimated: &[MonotoneMap], truth: &[MonotoneMap]) -> Result<f64> {
    if estimated.len() != truth.len() || estimated.is_empty() {
        return Err(Error::validation("mse needs two equally long, non-empty lists of maps"));
    }
    let mut total = 0.0;
    for (a, b) in estimated.iter().zip(truth) {
        if a.grid_size() != b.grid_size() {
            return Err(Error::validation("maps live on different grids"));
        }
        total += a.l2_distance_sq(b);
    }
    Ok(total / estimated.len() as f64)
}

/// Everything generated for one attempt.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub attempt: u64,
    pub ids: Vec<String>,
    pub locations: Vec<[f64; 2]>,
    pub distances: DistanceMatrix,
    pub knots: Vec<WarpKnots>,
    pub curves: Vec<SampledCurve>,
}

impl Replicate {
    pub fn true_warps(&self, grid: usize) -> Result<Vec<MonotoneMap>> {
        self.knots.iter().map(|k| k.to_map(grid)).collect()
    }
}

/// Deterministically generates attempt `attempt` of an experiment.
pub fn simulate_replicate(config: &SimConfig, attempt: u64) -> Result<Replicate> {
    config.validate()?;
    let mut rng = config.rng(attempt);
    let locations = if config.scheme == Scheme::A || config.freeze_locations {
        gen_locations(config.scheme, &mut config.rng(u64::MAX))
    } else {
        gen_locations(config.scheme, &mut rng)
    };
    let ids = location_ids(locations.len());
    let distances = planar_distances(&ids, &locations)?;
    let knots = gen_true_warps(&distances, config.psi, config.nugget, &mut rng)?;
    let curves = gen_dataset(&ids, &knots, config, &mut rng)?;
    Ok(Replicate {
        attempt,
        ids,
        locations,
        distances,
        knots,
        curves,
    })
}

/// MSEs of one accepted replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateOutcome {
    pub attempt: u64,
    pub nonspatial: f64,
    pub spatial: f64,
}

/// Registers a replicate in both modes. `Ok(None)` marks a rejection:
/// a numerical failure or a variogram fit that did not converge.
pub fn evaluate_replicate(rep: &Replicate, opts: &RegistrationOptions) -> Result<Option<ReplicateOutcome>> {
    let truth = rep.true_warps(opts.grid)?;
    let prep = match registration::prepare(&rep.curves, opts) {
        Ok(p) => p,
        Err(e) if e.is_numerical() => return Ok(None),
        Err(e) => return Err(e),
    };
    let nonspatial = registration::register_prepared(&prep, None, Mode::Nonspatial, opts)?;
    let spatial = match registration::register_prepared(&prep, Some(&rep.distances), Mode::Spatial, opts) {
        Ok(r) => r,
        Err(e) if e.is_numerical() => return Ok(None),
        Err(e) => return Err(e),
    };
    if spatial.diagnostics.fit.is_some_and(|f| !f.converged) {
        return Ok(None);
    }
    Ok(Some(ReplicateOutcome {
        attempt: rep.attempt,
        nonspatial: mse(&nonspatial.warps, &truth)?,
        spatial: mse(&spatial.warps, &truth)?,
    }))
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub scheme: Scheme,
    pub psi: f64,
    pub mode: Mode,
    pub replicates: usize,
    pub rejected: usize,
    pub avg_mse: f64,
    pub ci95_halfwidth: f64,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    /// Non-spatial row first, then spatial.
    pub rows: [SimRow; 2],
    pub outcomes: Vec<ReplicateOutcome>,
    pub rejected: usize,
    /// The attempt cap was reached before the replicate target.
    pub incomplete: bool,
}

/// Mean and 95% normal half-width `1.96·s/√n`.
pub fn mean_and_halfwidth(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

/// Runs attempts until `replicates` are accepted (at most twice that many
/// attempts). Results do not depend on the number of threads.
pub fn run_experiment(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let target = config.replicates;
    let cap = 2 * target as u64;
    let mut outcomes: Vec<ReplicateOutcome> = Vec::with_capacity(target);
    let mut next = 0u64;
    while outcomes.len() < target && next < cap {
        let batch = ((target - outcomes.len()) as u64).min(cap - next);
        let results: Vec<Result<Option<ReplicateOutcome>>> = (next..next + batch)
            .into_par_iter()
            .map(|a| evaluate_replicate(&simulate_replicate(config, a)?, &config.registration))
            .collect();
        next += batch;
        for r in results {
            if let Some(o) = r? {
                if outcomes.len() < target {
                    outcomes.push(o);
                }
            }
        }
    }
    let accepted_last = outcomes.last().map_or(next, |o| o.attempt + 1);
    let considered = if outcomes.len() == target { accepted_last } else { next };
    let rejected = considered as usize - outcomes.len();
    let row = |mode: Mode, values: Vec<f64>| {
        let (avg, hw) = mean_and_halfwidth(&values);
        SimRow {
            scheme: config.scheme,
            psi: config.psi,
            mode,
            replicates: values.len(),
            rejected,
            avg_mse: avg,
            ci95_halfwidth: hw,
        }
    };
    Ok(SimResult {
        rows: [
            row(Mode::Nonspatial, outcomes.iter().map(|o| o.nonspatial).collect()),
            row(Mode::Spatial, outcomes.iter().map(|o| o.spatial).collect()),
        ],
        incomplete: outcomes.len() < target,
        outcomes,
        rejected,
    })
}
