//! Registration of spatially indexed curves by local variation: smoothing,
//! local variation distributions, a (spatially weighted) central map, and
//! the resulting warps and aligned curves.

use rayon::prelude::*;

use crate::embed::DistanceMatrix;
use crate::error::{Error, Result};
use crate::quad;
use crate::smoothing::{PenaltyOrder, SampledCurve, SmoothCurve, SplineSmoother};
use crate::variogram::{
    self, blue_weights, covariance_matrix, FitOptions, ModelKind, VariogramCloud, VariogramFit, Weights,
};
use crate::warp::{self, local_variation, weighted_mean, MonotoneMap, PhaseFunctionals};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Spatial,
    Nonspatial,
}

#[derive(Debug, Clone, Copy)]
pub struct RegistrationOptions {
    pub grid: usize,
    pub model: ModelKind,
    pub fit: FitOptions,
    /// Compute aligned curves (needs an extra cubic fit per location).
    pub align: bool,
    /// Scale aligned curves to unit L2 norm.
    pub normalize: bool,
}

impl Default for RegistrationOptions {
    fn default() -> Self {
        Self {
            grid: quad::DEFAULT_GRID,
            model: ModelKind::Matern,
            fit: FitOptions::default(),
            align: true,
            normalize: false,
        }
    }
}

/// Per-location quantities that do not depend on the weighting mode.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub ids: Vec<String>,
    /// Local variation distributions `Λ̂_i`.
    pub lambdas: Vec<MonotoneMap>,
    /// Their inverses `Λ̂_i⁻¹`.
    pub lambda_invs: Vec<MonotoneMap>,
    /// Cubic fits, present when alignment was requested.
    pub cubic: Option<Vec<SmoothCurve>>,
}

/// Smooths each curve and computes its local variation distribution.
pub fn prepare(curves: &[SampledCurve], opts: &RegistrationOptions) -> Result<Prepared> {
    if curves.len() < 3 {
        return Err(Error::validation("registration needs at least three curves"));
    }
    let ids: Vec<String> = curves.iter().map(|c| c.location_id().to_string()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::validation(format!("duplicate location id {}", w[0])));
    }
    let quintic = smoothers(curves, PenaltyOrder::Quintic)?;
    let cubic = if opts.align {
        Some(smoothers(curves, PenaltyOrder::Cubic)?)
    } else {
        None
    };
    let grid = opts.grid;
    let per_location: Vec<Result<(MonotoneMap, MonotoneMap, Option<SmoothCurve>)>> = curves
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let fit = quintic[i].fit(c.values())?;
            let lambda = local_variation(&fit.derivative(), grid).map_err(|e| match e {
                Error::Degenerate(m) => Error::Degenerate(format!("curve {}: {m}", c.location_id())),
                other => other,
            })?;
            let inv = lambda.invert();
            let cubic_fit = match &cubic {
                Some(s) => Some(s[i].fit(c.values())?),
                None => None,
            };
            Ok((lambda, inv, cubic_fit))
        })
        .collect();
    let mut lambdas = Vec::with_capacity(curves.len());
    let mut lambda_invs = Vec::with_capacity(curves.len());
    let mut cubic_fits = Vec::with_capacity(curves.len());
    for r in per_location {
        let (l, li, c) = r?;
        lambdas.push(l);
        lambda_invs.push(li);
        if let Some(c) = c {
            cubic_fits.push(c);
        }
    }
    Ok(Prepared {
        ids,
        lambdas,
        lambda_invs,
        cubic: opts.align.then_some(cubic_fits),
    })
}

/// One smoother per curve, shared among curves observed at identical times.
fn smoothers(curves: &[SampledCurve], penalty: PenaltyOrder) -> Result<Vec<std::sync::Arc<SplineSmoother>>> {
    let mut cache: Vec<std::sync::Arc<SplineSmoother>> = Vec::new();
    let mut out = Vec::with_capacity(curves.len());
    for c in curves {
        let hit = cache.iter().find(|s| s.times() == c.times()).cloned();
        let s = match hit {
            Some(s) => s,
            None => {
                let s = std::sync::Arc::new(SplineSmoother::new(c.times(), penalty)?);
                cache.push(s.clone());
                s
            }
        };
        out.push(s);
    }
    Ok(out)
}

/// Where the averaging weights came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    /// Non-spatial mode: `1/n`.
    Uniform,
    /// Best linear unbiased weights from the fitted variogram.
    Blue,
    /// All pairwise distances equal, so every covariance model gives uniform weights.
    Exchangeable,
    /// Every local variation map coincides; the cloud carries no information.
    NoVariation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub weight_source: WeightSource,
    /// Whether the weighted mean needed isotonic projection.
    pub projected: bool,
    pub fit: Option<variogram::FitDiagnostics>,
    /// Condition estimate of the covariance solve.
    pub condition: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SpatialFit {
    pub cloud: VariogramCloud,
    pub fit: VariogramFit,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub ids: Vec<String>,
    /// Estimated warps `Ĥ_i⁻¹`.
    pub warps: Vec<MonotoneMap>,
    /// Their inverses `Ĥ_i`.
    pub inverse_warps: Vec<MonotoneMap>,
    /// Aligned curves `Ŷ_i ∘ Ĥ_i` sampled on the grid.
    pub aligned: Option<Vec<Vec<f64>>>,
    /// Central local variation distribution `Λ̂_μ`.
    pub central: MonotoneMap,
    pub weights: Weights,
    pub variogram: Option<SpatialFit>,
    pub diagnostics: Diagnostics,
}

/// Full pipeline from sampled curves.
pub fn register(
    curves: &[SampledCurve],
    d: Option<&DistanceMatrix>,
    mode: Mode,
    opts: &RegistrationOptions,
) -> Result<RegistrationResult> {
    let prepared = prepare(curves, opts)?;
    register_prepared(&prepared, d, mode, opts)
}

/// Pipeline from precomputed local variation distributions.
pub fn register_prepared(
    prep: &Prepared,
    d: Option<&DistanceMatrix>,
    mode: Mode,
    opts: &RegistrationOptions,
) -> Result<RegistrationResult> {
    let n = prep.ids.len();
    let uniform = || Weights {
        values: vec![1.0 / n as f64; n],
        condition: 1.0,
    };
    let (weights, source, spatial) = match mode {
        Mode::Nonspatial => (uniform(), WeightSource::Uniform, None),
        Mode::Spatial => {
            let d = d.ok_or_else(|| Error::validation("spatial mode needs a distance matrix"))?;
            let d = d.reorder(&prep.ids)?;
            let cloud = variogram::semivariance_cloud(&prep.ids, &prep.lambda_invs, &d)?;
            let first = cloud.distances[0];
            if cloud.distances.iter().all(|&x| (x - first).abs() <= 1e-12 * first) {
                (uniform(), WeightSource::Exchangeable, None)
            } else if cloud.semivariances.iter().all(|&s| s == 0.0) {
                (uniform(), WeightSource::NoVariation, None)
            } else {
                let fit = variogram::fit_irwls(&cloud, opts.model, &opts.fit)?;
                let c = covariance_matrix(&fit.model, &d)?;
                let w = blue_weights(&c)?;
                (w, WeightSource::Blue, Some(SpatialFit { cloud, fit }))
            }
        }
    };
    let mean = weighted_mean(&prep.lambda_invs, &weights.values)?;
    let central_inv = mean.map;
    let composed: Vec<(MonotoneMap, bool)> = prep
        .lambdas
        .par_iter()
        .map(|l| mean_inverse_at(&prep.lambdas, &weights.values, l))
        .collect::<Result<_>>()?;
    let projected = mean.projected || composed.iter().any(|c| c.1);
    let warps: Vec<MonotoneMap> = composed.into_iter().map(|c| c.0).collect();
    let inverse_warps: Vec<MonotoneMap> = warps.iter().map(MonotoneMap::invert).collect();
    let aligned = match &prep.cubic {
        Some(fits) => Some(
            fits.iter()
                .zip(&inverse_warps)
                .map(|(f, h)| align(f, h, opts.normalize))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let diagnostics = Diagnostics {
        weight_source: source,
        projected,
        fit: spatial.as_ref().map(|s| s.fit.diagnostics),
        condition: (source == WeightSource::Blue).then_some(weights.condition),
    };
    Ok(RegistrationResult {
        ids: prep.ids.clone(),
        warps,
        inverse_warps,
        aligned,
        central: central_inv.invert(),
        weights,
        variogram: spatial,
        diagnostics,
    })
}

/// `Σ_k w_k Λ̂_k⁻¹ ∘ Λ̂_i` on the grid, inverting each piecewise-linear `Λ̂_k`
/// exactly rather than through its resampled inverse, which loses accuracy
/// wherever `Λ̂_k` is nearly flat.
fn mean_inverse_at(lambdas: &[MonotoneMap], weights: &[f64], lambda_i: &MonotoneMap) -> Result<(MonotoneMap, bool)> {
    let mut acc = vec![0.0; lambda_i.grid_size()];
    for (l, &w) in lambdas.iter().zip(weights) {
        for (a, v) in acc.iter_mut().zip(l.invert_at(lambda_i.values())) {
            *a += w * v;
        }
    }
    warp::project_monotone(acc)
}

fn align(fit: &SmoothCurve, h: &MonotoneMap, normalize: bool) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = h.values().iter().map(|&s| fit.eval(s)).collect();
    if normalize {
        let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
        let norm = quad::trapezoid(&sq).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::degenerate("cannot normalize an aligned curve with zero norm"));
        }
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(values)
}

/// Displacement and stretch of every estimated warp.
pub fn phase_functionals(result: &RegistrationResult) -> Vec<PhaseFunctionals> {
    result.warps.iter().map(warp::phase_functionals).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{embedded_distances, Embedding};
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn times(m: usize) -> Vec<f64> {
        (0..m).map(|j| j as f64 / (m - 1) as f64).collect()
    }

    fn warped_curves(shifts: &[f64]) -> Vec<SampledCurve> {
        let t = times(60);
        shifts
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                // h^{-1}(t) = t + a t (1 - t), increasing for |a| < 1
                let v = t.iter().map(|&s| (PI * (s + a * s * (1.0 - s))).sin()).collect();
                SampledCurve::new(format!("loc{i}"), t.clone(), v).unwrap()
            })
            .collect()
    }

    fn planar(points: &[(f64, f64)]) -> DistanceMatrix {
        let coords = DMatrix::from_fn(points.len(), 2, |i, j| if j == 0 { points[i].0 } else { points[i].1 });
        let ids = (0..points.len()).map(|i| format!("loc{i}")).collect();
        embedded_distances(&Embedding::from_coords(ids, coords).unwrap())
    }

    fn scattered(n: usize) -> DistanceMatrix {
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let a = i as f64 * 2.399;
                (0.5 + 0.4 * (i as f64 / n as f64).sqrt() * a.cos(), 0.5 + 0.4 * (i as f64 / n as f64).sqrt() * a.sin())
            })
            .collect();
        planar(&pts)
    }

    #[test]
    fn identical_curves_give_identity_warps() {
        let curves = warped_curves(&[0.3; 8]);
        let d = scattered(8);
        for mode in [Mode::Nonspatial, Mode::Spatial] {
            let r = register(&curves, Some(&d), mode, &RegistrationOptions::default()).unwrap();
            let id = MonotoneMap::identity(r.warps[0].grid_size());
            for w in &r.warps {
                assert!(w.sup_distance(&id) < 1e-3);
            }
            for f in phase_functionals(&r) {
                assert!(f.displacement.abs() < 1e-3 && f.stretch.abs() < 1e-3);
            }
        }
    }

    #[test]
    fn equal_distances_match_nonspatial() {
        let curves = warped_curves(&[0.0, 0.2, -0.2, 0.4]);
        let tetra = DMatrix::from_fn(4, 4, |i, k| if i == k { 0.0 } else { 1.0 });
        let d = DistanceMatrix::new((0..4).map(|i| format!("loc{i}")).collect(), tetra).unwrap();
        let opts = RegistrationOptions::default();
        let a = register(&curves, Some(&d), Mode::Spatial, &opts).unwrap();
        let b = register(&curves, None, Mode::Nonspatial, &opts).unwrap();
        for (x, y) in a.warps.iter().zip(&b.warps) {
            assert!(x.sup_distance(y) < 1e-8);
        }
    }

    #[test]
    fn recovers_known_warps() {
        let shifts = [0.0, 0.25, -0.25, 0.1, -0.1, 0.3, -0.3, 0.05, -0.05];
        let curves = warped_curves(&shifts);
        let r = register(&curves, None, Mode::Nonspatial, &RegistrationOptions::default()).unwrap();
        let g = r.warps[0].grid_size();
        for (w, &a) in r.warps.iter().zip(&shifts) {
            let truth = MonotoneMap::from_fn(g, &|t: f64| t + a * t * (1.0 - t)).unwrap();
            assert!(w.sup_distance(&truth) < 0.02, "a={a}");
        }
        let id = MonotoneMap::identity(g);
        for (w, h) in r.warps.iter().zip(&r.inverse_warps) {
            assert!(h.compose(w).sup_distance(&id) <= 2.0 / g as f64);
        }
        assert!((r.weights.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let aligned = r.aligned.unwrap();
        for a in &aligned {
            for (k, v) in a.iter().enumerate() {
                let t = k as f64 / (g - 1) as f64;
                assert!((v - (PI * t).sin()).abs() < 0.05);
            }
        }
    }

    #[test]
    fn spatial_mode_runs_and_weights_sum_to_one() {
        let shifts: Vec<f64> = (0..12).map(|i| 0.3 * ((i as f64) * 0.7).sin()).collect();
        let curves = warped_curves(&shifts);
        let d = scattered(12);
        let r = register(&curves, Some(&d), Mode::Spatial, &RegistrationOptions::default()).unwrap();
        assert_eq!(r.diagnostics.weight_source, WeightSource::Blue);
        assert!((r.weights.values.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(r.variogram.is_some());
    }

    #[test]
    fn spatial_mode_checks_ids() {
        let curves = warped_curves(&[0.0, 0.1, 0.2]);
        assert!(register(&curves, None, Mode::Spatial, &RegistrationOptions::default()).is_err());
        let mut d = scattered(3);
        d = DistanceMatrix::new(vec!["loc0".into(), "loc1".into(), "other".into()], d.entries().clone()).unwrap();
        let err = register(&curves, Some(&d), Mode::Spatial, &RegistrationOptions::default()).unwrap_err();
        assert!(matches!(err, Error::IdMismatch { .. }));
    }

    #[test]
    fn deterministic() {
        let shifts: Vec<f64> = (0..10).map(|i| 0.2 * ((i as f64) * 1.3).cos()).collect();
        let curves = warped_curves(&shifts);
        let d = scattered(10);
        let opts = RegistrationOptions::default();
        let a = register(&curves, Some(&d), Mode::Spatial, &opts).unwrap();
        let b = register(&curves, Some(&d), Mode::Spatial, &opts).unwrap();
        assert_eq!(a.warps, b.warps);
        assert_eq!(a.weights, b.weights);
    }
}
