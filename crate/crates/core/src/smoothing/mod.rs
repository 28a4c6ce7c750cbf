//! Penalized smoothing splines with REML smoothing selection.
//!
//! The fit minimizes `sum (y_j - s(t_j))^2 + alpha * int_0^1 (D^q s)^2` over
//! splines of order `2q` with knots at the observation times. `q = 2` gives the
//! cubic smoothing spline; `q = 3` is a quintic penalized spline approximating
//! the minimizer over `C^4[0,1]`.
//!
//! The smoothing parameter is chosen by restricted maximum likelihood in a
//! Demmler–Reinsch basis: the penalty null space (polynomials of degree `< q`)
//! is split off exactly, the remaining ridge problem is diagonalized once per
//! set of observation times, and each fit costs two matrix–vector products and a
//! one-dimensional search. Errors are modeled as homoscedastic and independent.

mod bspline;

pub use bspline::BSpline;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::optim::grid_then_brent;
use crate::quad::{self, RealFn};

/// Minimum number of observations in a curve.
pub const MIN_SAMPLES: usize = 10;

/// Search bracket for the log smoothing parameter, relative to the spectrum.
const LOG_SMOOTHING_BRACKET: (f64, f64) = (-20.0, 20.0);
const LOG_SMOOTHING_TOL: f64 = 1e-6;

/// Observations of one location's curve on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    location_id: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SampledCurve {
    pub fn new(location_id: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let location_id = location_id.into();
        if times.len() != values.len() {
            return Err(Error::validation(format!(
                "curve {location_id}: {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < MIN_SAMPLES {
            return Err(Error::validation(format!(
                "curve {location_id}: {} observations, need at least {MIN_SAMPLES}",
                times.len()
            )));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("curve {location_id}: non-finite value")));
        }
        if times.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(Error::validation(format!("curve {location_id}: time outside [0, 1]")));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation(format!(
                "curve {location_id}: times must be strictly increasing"
            )));
        }
        Ok(Self {
            location_id,
            times,
            values,
        })
    }

    pub fn location_id(&self) -> &str {
        &self.location_id
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Order of the derivative in the roughness penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PenaltyOrder {
    /// Second-derivative penalty: cubic smoothing spline.
    Cubic,
    /// Third-derivative penalty: quintic smoothing spline.
    Quintic,
}

impl PenaltyOrder {
    /// Order `q` of the penalized derivative.
    pub fn derivative(self) -> usize {
        match self {
            PenaltyOrder::Cubic => 2,
            PenaltyOrder::Quintic => 3,
        }
    }

    pub fn from_derivative(q: usize) -> Result<Self> {
        match q {
            2 => Ok(PenaltyOrder::Cubic),
            3 => Ok(PenaltyOrder::Quintic),
            _ => Err(Error::validation(format!("penalty order must be 2 or 3, got {q}"))),
        }
    }

    fn spline_order(self) -> usize {
        2 * self.derivative()
    }
}

/// A fitted (or differentiated) smoothing spline on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothCurve {
    spline: BSpline,
    penalty: PenaltyOrder,
    smoothing: f64,
}

impl SmoothCurve {
    pub fn eval(&self, t: f64) -> f64 {
        self.spline.eval(t)
    }

    pub fn spline(&self) -> &BSpline {
        &self.spline
    }

    pub fn penalty(&self) -> PenaltyOrder {
        self.penalty
    }

    /// Smoothing parameter (alpha for cubic, beta for quintic fits).
    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Exact derivative of the piecewise polynomial.
    pub fn derivative(&self) -> SmoothCurve {
        SmoothCurve {
            spline: self.spline.derivative(),
            penalty: self.penalty,
            smoothing: self.smoothing,
        }
    }

    /// Rescales to unit L2 norm, using the trapezoid rule on `grid` points.
    pub fn l2_normalize_on(&self, grid: usize) -> Result<SmoothCurve> {
        let sq: Vec<f64> = quad::sample(self, grid).into_iter().map(|v| v * v).collect();
        let norm = quad::trapezoid(&sq).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::degenerate("cannot normalize a curve with zero L2 norm"));
        }
        Ok(SmoothCurve {
            spline: self.spline.scaled(1.0 / norm),
            penalty: self.penalty,
            smoothing: self.smoothing,
        })
    }

    pub fn l2_normalize(&self) -> Result<SmoothCurve> {
        self.l2_normalize_on(quad::DEFAULT_GRID)
    }
}

impl RealFn for SmoothCurve {
    fn value(&self, t: f64) -> f64 {
        self.eval(t)
    }
}

/// Fits a smoothing spline with REML-selected smoothing.
pub fn fit_smoothing_spline(samples: &SampledCurve, penalty: PenaltyOrder) -> Result<SmoothCurve> {
    SplineSmoother::new(samples.times(), penalty)?.fit(samples.values())
}

/// Exact derivative of a fitted curve.
pub fn derivative(curve: &SmoothCurve) -> SmoothCurve {
    curve.derivative()
}

/// Rescales a curve to unit L2 norm on [0, 1].
pub fn l2_normalize(curve: &SmoothCurve) -> Result<SmoothCurve> {
    curve.l2_normalize()
}

/// Precomputed Demmler–Reinsch decomposition for one set of observation times.
///
/// Reusable across every curve sampled at the same times.
#[derive(Debug, Clone)]
pub struct SplineSmoother {
    times: Vec<f64>,
    penalty: PenaltyOrder,
    knots: Vec<f64>,
    /// Maps data to projected coordinates `g = U' Q' y`.
    to_spectral: DMatrix<f64>,
    /// Squared singular values of the penalized block.
    sigma2: DVector<f64>,
    sigma: DVector<f64>,
    /// Unpenalized part of the coefficient map.
    coef_from_data: DMatrix<f64>,
    /// Penalized part of the coefficient map.
    coef_from_spectral: DMatrix<f64>,
    /// Reference scale for the log smoothing search.
    lambda_ref: f64,
    /// Observations minus null-space dimension.
    residual_dof: usize,
}

/// Smoothing parameter choice for [`SplineSmoother::fit_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    Reml,
    Fixed(f64),
}

impl SplineSmoother {
    pub fn new(times: &[f64], penalty: PenaltyOrder) -> Result<Self> {
        let q = penalty.derivative();
        let m = times.len();
        if m < q + 2 {
            return Err(Error::degenerate(format!(
                "{m} distinct time points, need at least {} for penalty order {q}",
                q + 2
            )));
        }
        if times.iter().any(|t| !t.is_finite() || !(0.0..=1.0).contains(t))
            || times.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::validation("times must be strictly increasing within [0, 1]"));
        }
        let order = penalty.spline_order();
        let interior: Vec<f64> = times.iter().copied().filter(|&t| t > 0.0 && t < 1.0).collect();
        let knots = bspline::clamped_knots(&interior, order);
        let k = bspline::basis_len(&knots, order);

        let x = bspline::design_matrix(&knots, order, times);
        let s = bspline::penalty_matrix(&knots, order, q);
        let poly = bspline::polynomial_coefs(&knots, order, q);

        // Orthonormal split of coefficient space: null space of the penalty, complement.
        let q_coef = orthonormal_completion(&poly);
        let null = q_coef.columns(0, q).into_owned();
        let comp = q_coef.columns(q, k - q).into_owned();

        let a = &x * &null;
        let q_data = orthonormal_completion(&a);
        let perp = q_data.columns(q, m - q).into_owned();

        let s_comp = comp.transpose() * &s * &comp;
        let s_comp = (&s_comp + s_comp.transpose()) * 0.5;
        let chol = s_comp
            .cholesky()
            .ok_or_else(|| Error::Numerical("penalty matrix is not positive definite".into()))?;
        let l = chol.l();

        let f = &x * &comp;
        let f_perp = perp.transpose() * &f;
        // E = F_perp L^{-T}  <=>  E' = L^{-1} F_perp'
        let et = l
            .solve_lower_triangular(&f_perp.transpose())
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let svd = et.transpose().svd(true, true);
        let u = svd.u.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
        let vt = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
        let sigma = svd.singular_values;
        let sigma2 = sigma.map(|s| s * s);

        let to_spectral = u.transpose() * perp.transpose();

        let a_pinv = a
            .clone()
            .pseudo_inverse(1e-14)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let coef_from_data = &null * &a_pinv;
        // u = L^{-T} V v
        let l_inv_t_v = l
            .transpose()
            .solve_upper_triangular(&vt.transpose())
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let coef_from_spectral = (&comp - &null * (&a_pinv * &f)) * l_inv_t_v;

        let positive: Vec<f64> = sigma2.iter().copied().filter(|&v| v > 0.0).collect();
        if positive.is_empty() {
            return Err(Error::degenerate("no penalized directions"));
        }
        let lambda_ref =
            (positive.iter().map(|v| v.ln()).sum::<f64>() / positive.len() as f64).exp();

        Ok(Self {
            times: times.to_vec(),
            penalty,
            knots,
            to_spectral,
            sigma2,
            sigma,
            coef_from_data,
            coef_from_spectral,
            lambda_ref,
            residual_dof: m - q,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn penalty(&self) -> PenaltyOrder {
        self.penalty
    }

    pub fn fit(&self, values: &[f64]) -> Result<SmoothCurve> {
        self.fit_with(values, Smoothing::Reml)
    }

    pub fn fit_with(&self, values: &[f64], smoothing: Smoothing) -> Result<SmoothCurve> {
        if values.len() != self.times.len() {
            return Err(Error::validation(format!(
                "{} values for {} time points",
                values.len(),
                self.times.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite observation"));
        }
        let y = DVector::from_column_slice(values);
        let g = &self.to_spectral * &y;
        let lambda = match smoothing {
            Smoothing::Fixed(alpha) => {
                if !(alpha >= 0.0) || !alpha.is_finite() {
                    return Err(Error::validation(format!("invalid smoothing {alpha}")));
                }
                alpha
            }
            Smoothing::Reml => self.reml_lambda(&y, &g),
        };
        let v = DVector::from_iterator(
            g.len(),
            g.iter()
                .zip(self.sigma.iter().zip(self.sigma2.iter()))
                .map(|(&gj, (&s, &s2))| {
                    let denom = s2 + lambda;
                    if denom > 0.0 {
                        s * gj / denom
                    } else {
                        0.0
                    }
                }),
        );
        let coefs = &self.coef_from_data * &y + &self.coef_from_spectral * v;
        let spline = BSpline::new(
            self.knots.clone(),
            coefs.iter().copied().collect(),
            self.penalty.spline_order(),
        );
        Ok(SmoothCurve {
            spline,
            penalty: self.penalty,
            smoothing: lambda,
        })
    }

    /// Negative twice restricted log-likelihood (up to constants), profiled over
    /// the error variance, at smoothing `lambda`.
    fn reml_criterion(&self, g: &DVector<f64>, remainder: f64, floor: f64, lambda: f64) -> f64 {
        let mut pen_rss = remainder;
        let mut log_det = 0.0;
        for (&gj, &s2) in g.iter().zip(self.sigma2.iter()) {
            pen_rss += gj * gj * lambda / (s2 + lambda);
            log_det += (s2 / lambda).ln_1p();
        }
        self.residual_dof as f64 * pen_rss.max(floor).ln() + log_det
    }

    fn reml_lambda(&self, y: &DVector<f64>, g: &DVector<f64>) -> f64 {
        // squared norm of the data outside the null space, minus its spectral part
        let y_perp_sq = {
            let total = y.norm_squared();
            let null_part = {
                let fitted = self.null_projection(y);
                fitted.norm_squared()
            };
            (total - null_part).max(0.0)
        };
        let remainder = (y_perp_sq - g.norm_squared()).max(0.0);
        let floor = 1e-30 * y.norm_squared() + f64::MIN_POSITIVE;
        let (lo, hi) = LOG_SMOOTHING_BRACKET;
        let lref = self.lambda_ref;
        let (rho, _) = grid_then_brent(
            |rho| self.reml_criterion(g, remainder, floor, lref * rho.exp()),
            lo,
            hi,
            40,
            LOG_SMOOTHING_TOL,
        );
        lref * rho.exp()
    }

    fn null_projection(&self, y: &DVector<f64>) -> DVector<f64> {
        // coef_from_data * y are null-space coefficients of the unpenalized fit;
        // evaluating them at the data gives the projection of y.
        let coefs = &self.coef_from_data * y;
        let order = self.penalty.spline_order();
        let x = bspline::design_matrix(&self.knots, order, &self.times);
        x * coefs
    }
}

/// Orthonormal basis of R^n whose first `a.ncols()` columns span `a`'s columns.
fn orthonormal_completion(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let r = a.ncols();
    let mut aug = DMatrix::zeros(n, r + n);
    aug.columns_mut(0, r).copy_from(a);
    aug.columns_mut(r, n).fill_with_identity();
    aug.qr().q()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn equispaced(m: usize) -> Vec<f64> {
        (0..m).map(|j| j as f64 / (m - 1) as f64).collect()
    }

    fn curve(f: impl Fn(f64) -> f64, m: usize) -> SampledCurve {
        let t = equispaced(m);
        let y = t.iter().map(|&t| f(t)).collect();
        SampledCurve::new("x", t, y).unwrap()
    }

    #[test]
    fn rejects_invalid_curves() {
        let t = equispaced(12);
        assert!(SampledCurve::new("a", t[..9].to_vec(), vec![0.0; 9]).is_err());
        let mut bad = t.clone();
        bad.swap(3, 4);
        assert!(SampledCurve::new("a", bad, vec![0.0; 12]).is_err());
        let mut y = vec![0.0; 12];
        y[2] = f64::NAN;
        assert!(matches!(
            SampledCurve::new("a", t.clone(), y),
            Err(Error::Validation(_))
        ));
        let mut out = t;
        out[11] = 1.5;
        assert!(SampledCurve::new("a", out, vec![0.0; 12]).is_err());
    }

    #[test]
    fn too_few_points_is_degenerate() {
        assert!(matches!(
            SplineSmoother::new(&[0.0, 0.5, 1.0, 0.2][..3], PenaltyOrder::Cubic),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            SplineSmoother::new(&[0.0, 0.3, 0.6, 1.0], PenaltyOrder::Quintic),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn line_reproduced_by_cubic_for_any_smoothing() {
        let c = curve(|t| 2.0 * t, 40);
        let sm = SplineSmoother::new(c.times(), PenaltyOrder::Cubic).unwrap();
        let grid = quad::uniform_grid(1001);
        for s in [Smoothing::Reml, Smoothing::Fixed(0.0), Smoothing::Fixed(1e-6), Smoothing::Fixed(1e6)] {
            let fit = sm.fit_with(c.values(), s).unwrap();
            for &t in &grid {
                assert!((fit.eval(t) - 2.0 * t).abs() < 1e-8, "{s:?} at {t}");
            }
            let d = fit.derivative();
            for &t in &grid {
                assert!((d.eval(t) - 2.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn quadratic_reproduced_by_quintic() {
        let c = curve(|t| t * t, 50);
        let sm = SplineSmoother::new(c.times(), PenaltyOrder::Quintic).unwrap();
        for s in [Smoothing::Reml, Smoothing::Fixed(1e-3), Smoothing::Fixed(1e8)] {
            let fit = sm.fit_with(c.values(), s).unwrap();
            let d = fit.derivative();
            for &t in &quad::uniform_grid(1001) {
                assert!((fit.eval(t) - t * t).abs() < 1e-8);
                assert!((d.eval(t) - 2.0 * t).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rss_non_increasing_as_smoothing_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let t = equispaced(60);
        let y: Vec<f64> = t
            .iter()
            .map(|&t| (3.0 * t).sin() + noise.sample(&mut rng))
            .collect();
        for pen in [PenaltyOrder::Cubic, PenaltyOrder::Quintic] {
            let sm = SplineSmoother::new(&t, pen).unwrap();
            let mut last = f64::INFINITY;
            for e in (-12..=6).rev() {
                let fit = sm.fit_with(&y, Smoothing::Fixed(10f64.powi(e))).unwrap();
                let rss: f64 = t.iter().zip(&y).map(|(&t, &y)| (fit.eval(t) - y).powi(2)).sum();
                assert!(rss <= last * (1.0 + 1e-9) + 1e-14, "{pen:?} 1e{e}: {rss} > {last}");
                last = rss;
            }
            let interp = sm.fit_with(&y, Smoothing::Fixed(0.0)).unwrap();
            let rss: f64 = t.iter().zip(&y).map(|(&t, &y)| (interp.eval(t) - y).powi(2)).sum();
            assert!(rss < 1e-10, "{pen:?} interpolation rss {rss}");
        }
    }

    #[test]
    fn fixed_smoothing_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let t = equispaced(30);
        let y: Vec<f64> = t.iter().map(|_| noise.sample(&mut rng)).collect();
        let ay: Vec<f64> = y.iter().map(|v| -3.5 * v).collect();
        let sm = SplineSmoother::new(&t, PenaltyOrder::Cubic).unwrap();
        let f1 = sm.fit_with(&y, Smoothing::Fixed(1e-4)).unwrap();
        let f2 = sm.fit_with(&ay, Smoothing::Fixed(1e-4)).unwrap();
        for &s in &quad::uniform_grid(201) {
            assert!((f2.eval(s) + 3.5 * f1.eval(s)).abs() < 1e-10);
        }
    }

    #[test]
    fn reml_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let t = equispaced(100);
        let y: Vec<f64> = t
            .iter()
            .map(|&t| (std::f64::consts::PI * t).sin() + noise.sample(&mut rng))
            .collect();
        let c = SampledCurve::new("a", t, y).unwrap();
        let a = fit_smoothing_spline(&c, PenaltyOrder::Quintic).unwrap();
        let b = fit_smoothing_spline(&c, PenaltyOrder::Quintic).unwrap();
        assert_eq!(a.smoothing().to_bits(), b.smoothing().to_bits());
        assert_eq!(a, b);
    }

    #[test]
    fn normalization() {
        let c = curve(|_| 2.0, 20);
        let fit = fit_smoothing_spline(&c, PenaltyOrder::Cubic).unwrap();
        let n = fit.l2_normalize().unwrap();
        for &t in &quad::uniform_grid(101) {
            assert!((n.eval(t) - 1.0).abs() < 1e-8);
        }
        let again = n.l2_normalize().unwrap();
        for &t in &quad::uniform_grid(101) {
            assert!((again.eval(t) - n.eval(t)).abs() < 1e-10);
        }
        let zero = fit_smoothing_spline(&curve(|_| 0.0, 20), PenaltyOrder::Cubic).unwrap();
        assert!(matches!(zero.l2_normalize(), Err(Error::Degenerate(_))));
    }
}
