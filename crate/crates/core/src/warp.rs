//! Monotone time transformations on a uniform grid.
//!
//! A [`MonotoneMap`] holds warps, their inverses and local variation
//! distributions alike: strictly increasing values on a uniform grid over
//! [0, 1], pinned to 0 and 1 at the ends, linearly interpolated in between.

use crate::error::{Error, Result};
use crate::quad::{self, RealFn};

/// Blend weight of the identity that keeps estimated maps strictly increasing.
pub const RIDGE: f64 = 1e-9;

/// Tolerance on the sum of averaging weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-10;

/// Strictly increasing map of [0, 1] onto itself, sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneMap {
    values: Vec<f64>,
}

impl MonotoneMap {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::validation("a monotone map needs at least two grid points"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("monotone map has non-finite values"));
        }
        if values[0] != 0.0 || values[values.len() - 1] != 1.0 {
            return Err(Error::validation("monotone map must satisfy m(0) = 0 and m(1) = 1"));
        }
        if let Some(k) = values.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::validation(format!(
                "monotone map is not strictly increasing at grid index {k}"
            )));
        }
        Ok(Self { values })
    }

    pub fn identity(grid: usize) -> Self {
        Self {
            values: quad::uniform_grid(grid),
        }
    }

    /// Samples `f` on the grid, pinning the endpoints to exactly 0 and 1.
    pub fn from_fn<F: RealFn + ?Sized>(grid: usize, f: &F) -> Result<Self> {
        let mut values = quad::sample(f, grid);
        values[0] = 0.0;
        values[grid - 1] = 1.0;
        Self::new(values)
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn step(&self) -> f64 {
        1.0 / (self.values.len() - 1) as f64
    }

    /// Linear interpolation between grid values; arguments are clamped to [0, 1].
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.values.len();
        let s = t.clamp(0.0, 1.0) * (n - 1) as f64;
        let k = (s.floor() as usize).min(n - 2);
        let frac = s - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    /// Piecewise-linear inverse resampled on the same grid.
    pub fn invert(&self) -> MonotoneMap {
        let n = self.values.len();
        let h = self.step();
        let mut out = Vec::with_capacity(n);
        out.push(0.0);
        let mut seg = 0;
        for j in 1..n - 1 {
            let y = j as f64 * h;
            while seg < n - 2 && self.values[seg + 1] < y {
                seg += 1;
            }
            let (a, b) = (self.values[seg], self.values[seg + 1]);
            let frac = ((y - a) / (b - a)).clamp(0.0, 1.0);
            out.push((seg as f64 + frac) * h);
        }
        out.push(1.0);
        ensure_strict(&mut out);
        MonotoneMap { values: out }
    }

    /// Exact inverse of the piecewise-linear interpolant at nondecreasing
    /// points `ys`, by a single merge pass.
    pub fn invert_at(&self, ys: &[f64]) -> Vec<f64> {
        let n = self.values.len();
        let h = self.step();
        let mut seg = 0;
        ys.iter()
            .map(|&y| {
                while seg < n - 2 && self.values[seg + 1] < y {
                    seg += 1;
                }
                let (a, b) = (self.values[seg], self.values[seg + 1]);
                let frac = ((y - a) / (b - a)).clamp(0.0, 1.0);
                (seg as f64 + frac) * h
            })
            .collect()
    }

    /// `self ∘ inner`, evaluated on `inner`'s grid.
    pub fn compose(&self, inner: &MonotoneMap) -> MonotoneMap {
        let n = inner.values.len();
        let mut out: Vec<f64> = inner.values.iter().map(|&v| self.eval(v)).collect();
        out[0] = 0.0;
        out[n - 1] = 1.0;
        ensure_strict(&mut out);
        MonotoneMap { values: out }
    }

    /// Sup-norm distance to another map on the same grid.
    pub fn sup_distance(&self, other: &MonotoneMap) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Squared L2 distance, by the trapezoid rule.
    pub fn l2_distance_sq(&self, other: &MonotoneMap) -> f64 {
        let sq: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .collect();
        quad::trapezoid(&sq)
    }
}

impl RealFn for MonotoneMap {
    fn value(&self, t: f64) -> f64 {
        self.eval(t)
    }
}

/// Blends with the identity when rounding left a non-increasing step.
fn ensure_strict(values: &mut [f64]) {
    if values.windows(2).all(|w| w[1] > w[0]) {
        return;
    }
    let n = values.len();
    for (k, v) in values.iter_mut().enumerate() {
        *v = (1.0 - RIDGE) * *v + RIDGE * (k as f64 / (n - 1) as f64);
    }
    values[0] = 0.0;
    values[n - 1] = 1.0;
}

/// Local variation distribution `t -> int_0^t |Df| / int_0^1 |Df|` from the
/// derivative of a curve, by cumulative trapezoid on `grid` points, blended
/// with the identity by [`RIDGE`].
pub fn local_variation<F: RealFn + ?Sized>(derivative: &F, grid: usize) -> Result<MonotoneMap> {
    let abs: Vec<f64> = quad::sample(derivative, grid).into_iter().map(f64::abs).collect();
    if abs.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("derivative is not finite on [0, 1]"));
    }
    let cum = quad::cumulative_trapezoid(&abs);
    let total = cum[grid - 1];
    let peak = abs.iter().copied().fold(0.0, f64::max);
    if !(total > 0.0) || peak < 1e-300 {
        return Err(Error::degenerate("derivative vanishes identically"));
    }
    let last = (grid - 1) as f64;
    let mut values: Vec<f64> = cum
        .iter()
        .enumerate()
        .map(|(k, c)| (1.0 - RIDGE) * (c / total) + RIDGE * (k as f64 / last))
        .collect();
    values[0] = 0.0;
    values[grid - 1] = 1.0;
    MonotoneMap::new(values)
}

/// Result of [`weighted_mean`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMean {
    pub map: MonotoneMap,
    /// Whether isotonic projection was needed (possible with negative weights).
    pub projected: bool,
}

/// Pointwise weighted sum of maps. Weights must sum to one and may be negative;
/// a non-monotone sum is projected back by pool-adjacent-violators.
pub fn weighted_mean(maps: &[MonotoneMap], weights: &[f64]) -> Result<WeightedMean> {
    if maps.is_empty() {
        return Err(Error::validation("weighted mean of zero maps"));
    }
    if maps.len() != weights.len() {
        return Err(Error::validation(format!(
            "{} maps but {} weights",
            maps.len(),
            weights.len()
        )));
    }
    let grid = maps[0].grid_size();
    if maps.iter().any(|m| m.grid_size() != grid) {
        return Err(Error::validation("maps live on different grids"));
    }
    let sum: f64 = weights.iter().sum();
    if !sum.is_finite() || (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::validation(format!("weights sum to {sum}, not 1")));
    }
    let mut values = vec![0.0; grid];
    for (m, &w) in maps.iter().zip(weights) {
        for (acc, v) in values.iter_mut().zip(&m.values) {
            *acc += w * v;
        }
    }
    let (map, projected) = project_monotone(values)?;
    Ok(WeightedMean { map, projected })
}

/// Pins the endpoints and, if the values are not strictly increasing,
/// projects them by pool-adjacent-violators, clamps to [0, 1] and blends with
/// the identity by [`RIDGE`]. Reports whether projection was needed.
pub fn project_monotone(mut values: Vec<f64>) -> Result<(MonotoneMap, bool)> {
    let grid = values.len();
    if grid < 2 {
        return Err(Error::validation("a monotone map needs at least two grid points"));
    }
    values[0] = 0.0;
    values[grid - 1] = 1.0;
    let projected = values.windows(2).any(|w| w[1] <= w[0]);
    if projected {
        values = isotonic(&values);
        let last = (grid - 1) as f64;
        for (k, v) in values.iter_mut().enumerate() {
            *v = (1.0 - RIDGE) * v.clamp(0.0, 1.0) + RIDGE * (k as f64 / last);
        }
        values[0] = 0.0;
        values[grid - 1] = 1.0;
    }
    Ok((MonotoneMap::new(values)?, projected))
}

/// Least-squares non-decreasing fit (pool-adjacent-violators).
fn isotonic(y: &[f64]) -> Vec<f64> {
    let mut means: Vec<f64> = Vec::with_capacity(y.len());
    let mut sizes: Vec<usize> = Vec::with_capacity(y.len());
    for &v in y {
        means.push(v);
        sizes.push(1);
        while means.len() > 1 && means[means.len() - 2] >= means[means.len() - 1] {
            let (m2, s2) = (means.pop().unwrap(), sizes.pop().unwrap());
            let (m1, s1) = (means.pop().unwrap(), sizes.pop().unwrap());
            let s = s1 + s2;
            means.push((m1 * s1 as f64 + m2 * s2 as f64) / s as f64);
            sizes.push(s);
        }
    }
    means
        .iter()
        .zip(&sizes)
        .flat_map(|(&m, &s)| std::iter::repeat_n(m, s))
        .collect()
}

/// Displacement and stretch of a warp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFunctionals {
    pub displacement: f64,
    pub stretch: f64,
}

/// Mean of the distribution with CDF `h_inv`, minus 1/2.
pub fn displacement(h_inv: &MonotoneMap) -> f64 {
    let h = h_inv.step();
    let mean: f64 = h_inv
        .values
        .windows(2)
        .enumerate()
        .map(|(k, w)| (k as f64 + 0.5) * h * (w[1] - w[0]))
        .sum();
    mean - 0.5
}

/// Log of twelve times the variance of the distribution with CDF `h_inv`
/// (zero for the identity). Moments are exact for the piecewise-linear CDF.
pub fn stretch(h_inv: &MonotoneMap) -> f64 {
    let h = h_inv.step();
    let center = displacement(h_inv) + 0.5;
    let within = h * h / 12.0;
    let var: f64 = h_inv
        .values
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let mid = (k as f64 + 0.5) * h - center;
            (w[1] - w[0]) * (mid * mid + within)
        })
        .sum();
    (12.0 * var).ln()
}

pub fn phase_functionals(h_inv: &MonotoneMap) -> PhaseFunctionals {
    PhaseFunctionals {
        displacement: displacement(h_inv),
        stretch: stretch(h_inv),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const G: usize = 1001;

    fn sq() -> MonotoneMap {
        MonotoneMap::from_fn(G, &|t: f64| t * t).unwrap()
    }

    fn sqrt_map() -> MonotoneMap {
        MonotoneMap::from_fn(G, &|t: f64| t.sqrt()).unwrap()
    }

    #[test]
    fn validation() {
        assert!(MonotoneMap::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(MonotoneMap::new(vec![0.1, 0.5, 1.0]).is_err());
        assert!(MonotoneMap::new(vec![0.0, 0.5, 0.9]).is_err());
        assert!(MonotoneMap::new(vec![0.0, 0.4, 1.0]).is_ok());
    }

    #[test]
    fn local_variation_of_identity() {
        let lv = local_variation(&|_t: f64| 1.0, G).unwrap();
        assert!(lv.sup_distance(&MonotoneMap::identity(G)) < 1e-8);
    }

    #[test]
    fn local_variation_of_sine() {
        let lv = local_variation(&|t: f64| PI * (PI * t).cos(), G).unwrap();
        let exact = |t: f64| {
            if t <= 0.5 {
                (PI * t).sin() / 2.0
            } else {
                1.0 - (PI * t).sin() / 2.0
            }
        };
        for (k, &v) in lv.values().iter().enumerate() {
            let t = k as f64 / (G - 1) as f64;
            assert!((v - exact(t)).abs() < 1e-4, "t={t}");
        }
    }

    #[test]
    fn local_variation_of_monotone_quadratic() {
        let lv = local_variation(&|t: f64| 2.0 * t, G).unwrap();
        assert!(lv.sup_distance(&sq()) < 1e-6);
    }

    #[test]
    fn local_variation_rejects_zero_derivative() {
        assert!(matches!(
            local_variation(&|_t: f64| 0.0, G),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn local_variation_is_scale_invariant() {
        let f = |t: f64| (5.0 * t).cos() * 3.0 + 1.0 - t;
        let a = local_variation(&f, G).unwrap();
        for c in [1e-3, 0.5, 7.0, 1e4] {
            let b = local_variation(&|t: f64| c * f(t), G).unwrap();
            assert!(a.sup_distance(&b) < 1e-10);
        }
    }

    #[test]
    fn local_variation_is_warp_equivariant() {
        // f(t) = sin(2 pi t) + t, theta^{-1}(t) = (t + t^2)/2
        let df = |t: f64| 2.0 * PI * (2.0 * PI * t).cos() + 1.0;
        let theta_inv = |t: f64| 0.5 * (t + t * t);
        let dtheta_inv = |t: f64| 0.5 + t;
        let warped = |t: f64| df(theta_inv(t)) * dtheta_inv(t);
        let lhs = local_variation(&warped, G).unwrap();
        let rhs = local_variation(&df, G)
            .unwrap()
            .compose(&MonotoneMap::from_fn(G, &theta_inv).unwrap());
        assert!(lhs.sup_distance(&rhs) < 3.0 / G as f64);
    }

    #[test]
    fn inversion() {
        let id = MonotoneMap::identity(G);
        assert!(id.invert().sup_distance(&id) < 1e-15);
        assert!(sq().invert().sup_distance(&sqrt_map()) < 2.0 / G as f64);
    }

    #[test]
    fn exact_inverse_points() {
        let m = sq();
        let back = m.invert_at(m.values());
        for (k, v) in back.iter().enumerate() {
            assert!((v - k as f64 / (G - 1) as f64).abs() < 1e-12);
        }
        let ys = [0.0, 0.25, 0.5, 1.0];
        for (y, x) in ys.iter().zip(m.invert_at(&ys)) {
            assert!((x - y.sqrt()).abs() < 1e-3);
        }
    }

    #[test]
    fn composition() {
        let m = sq();
        assert!(m.compose(&MonotoneMap::identity(G)).sup_distance(&m) < 1e-10);
        assert!(m.compose(&m.invert()).sup_distance(&MonotoneMap::identity(G)) < 2.0 / G as f64);
        let quartic = MonotoneMap::from_fn(G, &|t: f64| t.powi(4)).unwrap();
        assert!(m.compose(&m).sup_distance(&quartic) < 2.0 / G as f64);
    }

    #[test]
    fn weighted_means() {
        let m = sq();
        let same = weighted_mean(&[m.clone(), m.clone(), m.clone()], &[0.7, -0.2, 0.5]).unwrap();
        assert!(same.map.sup_distance(&m) < 1e-12);
        let first = weighted_mean(&[m.clone(), sqrt_map()], &[1.0, 0.0]).unwrap();
        assert_eq!(first.map, m);
        let half = weighted_mean(&[m.clone(), sqrt_map()], &[0.5, 0.5]).unwrap();
        for (k, &v) in half.map.values().iter().enumerate() {
            let t = k as f64 / (G - 1) as f64;
            assert!((v - 0.5 * (t * t + t.sqrt())).abs() < 1e-10);
        }
        assert!(!half.projected);
        assert!(matches!(
            weighted_mean(&[m.clone(), m.clone()], &[0.5, 0.6]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn negative_weights_trigger_projection() {
        let out = weighted_mean(&[sq(), sqrt_map()], &[2.5, -1.5]).unwrap();
        assert!(out.projected);
        assert!(out.map.values().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn functionals_of_reference_maps() {
        let id = MonotoneMap::identity(G);
        assert!(displacement(&id).abs() < 1e-6);
        assert!(stretch(&id).abs() < 1e-6);
        assert!((displacement(&sq()) - 1.0 / 6.0).abs() < 1e-4);
        assert!((displacement(&sqrt_map()) + 1.0 / 6.0).abs() < 1e-4);
        assert!((stretch(&sq()) - (2.0f64 / 3.0).ln()).abs() < 1e-3);
        assert!((stretch(&sqrt_map()) - (16.0f64 / 15.0).ln()).abs() < 1e-3);
    }

    fn arb_map(grid: usize) -> impl Strategy<Value = MonotoneMap> {
        prop::collection::vec(0.01f64..1.0, grid - 1).prop_map(move |inc| {
            let total: f64 = inc.iter().sum();
            let mut values = Vec::with_capacity(grid);
            let mut acc = 0.0;
            values.push(0.0);
            for d in &inc[..grid - 2] {
                acc += d / total;
                values.push(acc);
            }
            values.push(1.0);
            MonotoneMap::new(values).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn double_inverse_is_close(m in arb_map(201)) {
            prop_assert!(m.invert().invert().sup_distance(&m) <= 2.0 / 201.0);
        }

        #[test]
        fn group_closure(a in arb_map(101), b in arb_map(101)) {
            for m in [a.compose(&b), a.invert(), b.compose(&a.invert())] {
                prop_assert!(MonotoneMap::new(m.into_values()).is_ok());
            }
        }

        #[test]
        fn earlier_mass_means_negative_displacement(m in arb_map(101)) {
            // max(m, id) dominates the identity CDF
            let id = MonotoneMap::identity(101);
            let mut vals: Vec<f64> = m.values().iter().zip(id.values()).map(|(a, b)| a.max(*b)).collect();
            vals[50] = vals[50].max(0.5 + 1e-3);
            for k in 51..101 { vals[k] = vals[k].max(vals[k-1] + 1e-9).min(1.0); }
            vals[100] = 1.0;
            if let Ok(dom) = MonotoneMap::new(vals) {
                prop_assert!(displacement(&dom) < 0.0);
            }
        }
    }
}
