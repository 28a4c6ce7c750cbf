//! Variogram clouds of inverse local-variation maps, Matérn and exponential
//! models fitted by iteratively reweighted least squares, covariance matrices
//! and best-linear-unbiased mean weights.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::embed::DistanceMatrix;
use crate::error::{Error, Result};
use crate::optim::{self, LeastSquares, LmOptions};
use crate::quad;
use crate::special::{ln_bessel_k_pair, ln_gamma, matern_correlation};
use crate::warp::MonotoneMap;

pub const NU_MIN: f64 = 0.05;
pub const NU_MAX: f64 = 150.0;

/// Condition number above which a covariance matrix is rejected.
pub const MAX_CONDITION: f64 = 1e12;

const PD_TOL: f64 = 1e-12;

/// Pairwise distances and semivariances, one entry per unordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct VariogramCloud {
    pub pairs: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
    pub semivariances: Vec<f64>,
}

impl VariogramCloud {
    pub fn new(distances: Vec<f64>, semivariances: Vec<f64>) -> Result<Self> {
        if distances.len() != semivariances.len() {
            return Err(Error::validation("distances and semivariances differ in length"));
        }
        if distances.iter().any(|d| !d.is_finite() || *d <= 0.0) {
            return Err(Error::validation("cloud distances must be positive and finite"));
        }
        if semivariances.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::validation("cloud semivariances must be nonnegative and finite"));
        }
        Ok(Self {
            pairs: Vec::new(),
            distances,
            semivariances,
        })
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    /// Averages into `bins` groups of (nearly) equal size, ordered by distance.
    pub fn binned(&self, bins: usize) -> VariogramCloud {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.distances[a].total_cmp(&self.distances[b]));
        let bins = bins.clamp(1, self.len().max(1));
        let mut distances = Vec::with_capacity(bins);
        let mut semivariances = Vec::with_capacity(bins);
        for b in 0..bins {
            let lo = b * order.len() / bins;
            let hi = (b + 1) * order.len() / bins;
            if hi == lo {
                continue;
            }
            let group = &order[lo..hi];
            let k = group.len() as f64;
            distances.push(group.iter().map(|&i| self.distances[i]).sum::<f64>() / k);
            semivariances.push(group.iter().map(|&i| self.semivariances[i]).sum::<f64>() / k);
        }
        VariogramCloud {
            pairs: Vec::new(),
            distances,
            semivariances,
        }
    }
}

/// Semivariance cloud `½∫(m_i − m_k)²` of maps located at `ids`, with
/// distances taken from `d`.
pub fn semivariance_cloud(ids: &[String], maps: &[MonotoneMap], d: &DistanceMatrix) -> Result<VariogramCloud> {
    if ids.len() != maps.len() {
        return Err(Error::validation("ids and maps differ in length"));
    }
    let n = ids.len();
    if n < 3 {
        return Err(Error::validation("a variogram needs at least three locations"));
    }
    let d = d.reorder(ids)?;
    let grid = maps[0].grid_size();
    if maps.iter().any(|m| m.grid_size() != grid) {
        return Err(Error::validation("maps live on different grids"));
    }
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    let mut distances = Vec::with_capacity(pairs.capacity());
    let mut semivariances = Vec::with_capacity(pairs.capacity());
    let mut sq = vec![0.0; grid];
    for i in 0..n {
        for k in i + 1..n {
            let dist = d.get(i, k);
            if dist <= 0.0 {
                return Err(Error::validation(format!(
                    "locations {} and {} are at distance zero",
                    ids[i], ids[k]
                )));
            }
            for (s, (a, b)) in sq.iter_mut().zip(maps[i].values().iter().zip(maps[k].values())) {
                *s = (a - b) * (a - b);
            }
            pairs.push((i, k));
            distances.push(dist);
            semivariances.push(0.5 * quad::trapezoid(&sq));
        }
    }
    Ok(VariogramCloud {
        pairs,
        distances,
        semivariances,
    })
}

/// Matérn variogram `γ(d) = ι + σ²(1 − M_ν(d/ρ))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    pub nugget: f64,
    pub sill: f64,
    pub nu: f64,
    pub range: f64,
}

impl MaternParams {
    pub fn new(nugget: f64, sill: f64, nu: f64, range: f64) -> Result<Self> {
        let ok = nugget.is_finite()
            && nugget >= 0.0
            && sill.is_finite()
            && sill > 0.0
            && (NU_MIN..=NU_MAX).contains(&nu)
            && range.is_finite()
            && range > 0.0;
        if !ok {
            return Err(Error::validation(format!(
                "invalid Matérn parameters: nugget {nugget}, sill {sill}, nu {nu}, range {range}"
            )));
        }
        Ok(Self {
            nugget,
            sill,
            nu,
            range,
        })
    }
}

/// Exponential variogram `γ(d) = ι + σ²(1 − e^{−d/ψ})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialParams {
    pub nugget: f64,
    pub sill: f64,
    pub scale: f64,
}

impl ExponentialParams {
    pub fn new(nugget: f64, sill: f64, scale: f64) -> Result<Self> {
        let ok = nugget.is_finite()
            && nugget >= 0.0
            && sill.is_finite()
            && sill > 0.0
            && scale.is_finite()
            && scale > 0.0;
        if !ok {
            return Err(Error::validation(format!(
                "invalid exponential parameters: nugget {nugget}, sill {sill}, scale {scale}"
            )));
        }
        Ok(Self { nugget, sill, scale })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariogramModel {
    Matern(MaternParams),
    Exponential(ExponentialParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Matern,
    Exponential,
}

impl VariogramModel {
    pub fn nugget(&self) -> f64 {
        match self {
            VariogramModel::Matern(p) => p.nugget,
            VariogramModel::Exponential(p) => p.nugget,
        }
    }

    /// Partial sill σ².
    pub fn sill(&self) -> f64 {
        match self {
            VariogramModel::Matern(p) => p.sill,
            VariogramModel::Exponential(p) => p.sill,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            VariogramModel::Matern(_) => ModelKind::Matern,
            VariogramModel::Exponential(_) => ModelKind::Exponential,
        }
    }

    /// Correlation of the structured component; 1 at `d = 0`.
    pub fn correlation(&self, d: f64) -> f64 {
        match self {
            VariogramModel::Matern(p) => matern_correlation(d, p.nu, p.range),
            VariogramModel::Exponential(p) => (-d / p.scale).exp(),
        }
    }

    /// `γ(d)`, with `γ(0) = 0` exactly.
    pub fn semivariance(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return 0.0;
        }
        self.nugget() + self.sill() * (1.0 - self.correlation(d))
    }

    /// `γ(∞) = ι + σ²`.
    pub fn total_sill(&self) -> f64 {
        self.nugget() + self.sill()
    }
}

pub fn model_semivariance(d: f64, model: &VariogramModel) -> Result<f64> {
    if !d.is_finite() || d < 0.0 {
        return Err(Error::validation(format!("invalid distance {d}")));
    }
    match model {
        VariogramModel::Matern(p) => {
            MaternParams::new(p.nugget, p.sill, p.nu, p.range)?;
        }
        VariogramModel::Exponential(p) => {
            ExponentialParams::new(p.nugget, p.sill, p.scale)?;
        }
    }
    Ok(model.semivariance(d))
}

/// Weighting of cloud points between reweighting rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// `1/γ(d)²`, the Cressie scheme.
    InverseSquared,
    /// `γ(d)²`.
    Squared,
    Uniform,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub weighting: Weighting,
    pub max_outer: usize,
    pub outer_tol: f64,
    pub max_inner: usize,
    pub inner_tol: f64,
    /// Fit to this many equal-count distance bins instead of the raw cloud.
    pub bins: Option<usize>,
    /// Upper bound on the range (or scale) as a multiple of the largest distance.
    pub max_range_factor: f64,
    /// Upper bound on nugget and partial sill as a multiple of the largest semivariance.
    pub max_sill_factor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::InverseSquared,
            max_outer: 20,
            outer_tol: 1e-4,
            max_inner: 100,
            inner_tol: 1e-6,
            bins: None,
            max_range_factor: 1e3,
            max_sill_factor: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitDiagnostics {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    pub weighted_rss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramFit {
    pub model: VariogramModel,
    pub diagnostics: FitDiagnostics,
}

struct CloudProblem<'a> {
    kind: ModelKind,
    distances: &'a [f64],
    targets: &'a [f64],
    root_weights: Vec<f64>,
}

/// `(correlation, ∂ ln M / ∂ ln x)` for the Matérn correlation at `x = √(2ν) d/ρ`.
fn matern_with_slope(d: f64, nu: f64, rho: f64) -> (f64, f64) {
    let x = (2.0 * nu).sqrt() * d / rho;
    if !(x > 0.0) {
        return (1.0, 0.0);
    }
    if !x.is_finite() {
        return (0.0, 0.0);
    }
    let (lk, lk1) = ln_bessel_k_pair(nu, x);
    let log_corr = (1.0 - nu) * LN_2 - ln_gamma(nu) + nu * x.ln() + lk;
    let corr = if log_corr.is_nan() { 0.0 } else { log_corr.exp().clamp(0.0, 1.0) };
    (corr, 2.0 * nu - x * (lk1 - lk).exp())
}

impl CloudProblem<'_> {
    fn model(&self, theta: &DVector<f64>) -> VariogramModel {
        match self.kind {
            ModelKind::Matern => VariogramModel::Matern(MaternParams {
                nugget: theta[0].exp(),
                sill: theta[1].exp(),
                nu: theta[2].exp(),
                range: theta[3].exp(),
            }),
            ModelKind::Exponential => VariogramModel::Exponential(ExponentialParams {
                nugget: theta[0].exp(),
                sill: theta[1].exp(),
                scale: theta[2].exp(),
            }),
        }
    }
}

impl LeastSquares for CloudProblem<'_> {
    fn residuals(&mut self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let model = self.model(theta);
        let r = DVector::from_fn(self.distances.len(), |k, _| {
            self.root_weights[k] * (model.semivariance(self.distances[k]) - self.targets[k])
        });
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&mut self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let m = self.distances.len();
        let nugget = theta[0].exp();
        let sill = theta[1].exp();
        let mut jac = DMatrix::zeros(m, theta.len());
        match self.kind {
            ModelKind::Matern => {
                let (nu, rho) = (theta[2].exp(), theta[3].exp());
                const H: f64 = 1e-6;
                let nu_h = (theta[2] + H).exp();
                for k in 0..m {
                    let d = self.distances[k];
                    let (c, slope) = matern_with_slope(d, nu, rho);
                    let c_h = matern_correlation(d, nu_h, rho);
                    let w = self.root_weights[k];
                    jac[(k, 0)] = w * nugget;
                    jac[(k, 1)] = w * sill * (1.0 - c);
                    jac[(k, 2)] = -w * sill * (c_h - c) / H;
                    jac[(k, 3)] = w * sill * c * slope;
                }
            }
            ModelKind::Exponential => {
                let psi = theta[2].exp();
                for k in 0..m {
                    let d = self.distances[k];
                    let c = (-d / psi).exp();
                    let w = self.root_weights[k];
                    jac[(k, 0)] = w * nugget;
                    jac[(k, 1)] = w * sill * (1.0 - c);
                    jac[(k, 2)] = -w * sill * c * d / psi;
                }
            }
        }
        jac.iter().all(|v| v.is_finite()).then_some(jac)
    }
}

/// Natural-scale parameters, nugget and sill measured against the total sill
/// so that a vanishing nugget does not dominate relative changes.
fn relative_change(old: &DVector<f64>, new: &DVector<f64>) -> f64 {
    let (o, n) = (old.map(f64::exp), new.map(f64::exp));
    let scale = o[0] + o[1];
    let mut worst: f64 = 0.0;
    for i in 0..o.len() {
        let denom = if i < 2 { scale } else { o[i] };
        worst = worst.max((n[i] - o[i]).abs() / denom);
    }
    worst
}

/// Weighted nonlinear least-squares fit of a variogram model to a cloud,
/// alternating solves with reweighting until parameters settle.
pub fn fit_irwls(cloud: &VariogramCloud, kind: ModelKind, opts: &FitOptions) -> Result<VariogramFit> {
    let binned;
    let cloud = match opts.bins {
        Some(b) if b < cloud.len() => {
            binned = cloud.binned(b);
            &binned
        }
        _ => cloud,
    };
    let m = cloud.len();
    let mut distinct = cloud.distances.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if m < 8 || distinct.len() < 3 {
        return Err(Error::validation(
            "variogram fit needs at least 8 cloud points at 3 distinct distances",
        ));
    }
    let mean = cloud.semivariances.iter().sum::<f64>() / m as f64;
    let top = cloud.semivariances.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::degenerate("all semivariances are zero"));
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| cloud.distances[a].total_cmp(&cloud.distances[b]));
    let decile = (m / 10).max(1);
    let nugget0 = order[..decile].iter().map(|&i| cloud.semivariances[i]).sum::<f64>() / decile as f64;
    let nugget0 = nugget0.max(1e-6 * mean);
    let sill0 = mean.max(nugget0 + 1e-12) - nugget0;
    let sill0 = sill0.max(1e-3 * mean);
    let range0 = distinct_median(&cloud.distances);
    let (dmin, dmax) = (distinct[0], distinct[distinct.len() - 1]);

    let amp_lo = (1e-10 * mean).ln();
    let amp_hi = (opts.max_sill_factor * top).ln();
    let (theta0, lower, upper) = match kind {
        ModelKind::Matern => (
            vec![nugget0.ln(), sill0.ln(), 0.0, range0.ln()],
            vec![amp_lo, amp_lo, NU_MIN.ln(), (1e-3 * dmin).ln()],
            vec![amp_hi, amp_hi, NU_MAX.ln(), (opts.max_range_factor * dmax).ln()],
        ),
        ModelKind::Exponential => (
            vec![nugget0.ln(), sill0.ln(), range0.ln()],
            vec![amp_lo, amp_lo, (1e-3 * dmin).ln()],
            vec![amp_hi, amp_hi, (opts.max_range_factor * dmax).ln()],
        ),
    };
    let lower = DVector::from_vec(lower);
    let upper = DVector::from_vec(upper);
    let mut theta = DVector::from_vec(theta0);

    let mut problem = CloudProblem {
        kind,
        distances: &cloud.distances,
        targets: &cloud.semivariances,
        root_weights: vec![1.0; m],
    };
    let lm = LmOptions {
        max_iter: opts.max_inner,
        step_tol: opts.inner_tol,
    };
    let mut inner_total = 0;
    let mut converged = false;
    let mut outer = 0;
    let mut rss = f64::NAN;
    let mut inner_converged = false;
    while outer < opts.max_outer {
        outer += 1;
        let out = optim::levenberg_marquardt(&mut problem, theta.clone(), &lower, &upper, lm)
            .ok_or_else(|| Error::Numerical("variogram model cannot be evaluated".into()))?;
        inner_total += out.iterations;
        rss = out.rss;
        inner_converged = out.converged;
        let change = relative_change(&theta, &out.x);
        theta = out.x;
        if outer > 1 && change < opts.outer_tol && out.converged {
            converged = true;
            break;
        }
        if opts.weighting == Weighting::Uniform && outer > 1 && out.converged {
            converged = true;
            break;
        }
        let model = problem.model(&theta);
        let raw: Vec<f64> = cloud
            .distances
            .iter()
            .map(|&d| {
                let g = model.semivariance(d).max(1e-300);
                match opts.weighting {
                    Weighting::InverseSquared => 1.0 / (g * g),
                    Weighting::Squared => g * g,
                    Weighting::Uniform => 1.0,
                }
            })
            .collect();
        let norm = raw.iter().sum::<f64>() / m as f64;
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numerical("variogram weights overflowed".into()));
        }
        problem.root_weights = raw.iter().map(|w| (w / norm).sqrt()).collect();
    }
    if opts.max_outer == 1 {
        converged = inner_converged;
    }
    Ok(VariogramFit {
        model: problem.model(&theta),
        diagnostics: FitDiagnostics {
            outer_iterations: outer,
            inner_iterations: inner_total,
            converged,
            weighted_rss: rss,
        },
    })
}

fn distinct_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Covariance matrix of the functional observations, `C_ik = 2γ(∞) − 2γ(d_ik)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    pub ids: Vec<String>,
    pub entries: DMatrix<f64>,
}

pub fn covariance_matrix(model: &VariogramModel, d: &DistanceMatrix) -> Result<CovMatrix> {
    let n = d.len();
    let total = model.total_sill();
    let sill = model.sill();
    let entries = DMatrix::from_fn(n, n, |i, k| {
        if i == k {
            2.0 * total
        } else {
            2.0 * sill * model.correlation(d.get(i, k))
        }
    });
    let eig = SymmetricEigen::new(entries.clone());
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > PD_TOL * max) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(CovMatrix {
        ids: d.ids().to_vec(),
        entries,
    })
}

/// Weights summing to one, with the condition estimate of the solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub values: Vec<f64>,
    pub condition: f64,
}

/// `C⁻¹1 / (1ᵀC⁻¹1)` by Cholesky solve.
pub fn blue_weights(c: &CovMatrix) -> Result<Weights> {
    let n = c.entries.nrows();
    let eig = SymmetricEigen::new(c.entries.clone());
    let max = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let chol = c
        .entries
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: min })?;
    let z = chol.solve(&DVector::from_element(n, 1.0));
    let total = z.sum();
    if !(total.is_finite() && total != 0.0) {
        return Err(Error::Numerical("weights normalizer vanished".into()));
    }
    Ok(Weights {
        values: z.iter().map(|v| v / total).collect(),
        condition,
    })
}
