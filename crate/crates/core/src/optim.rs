//! Small optimizers: Brent line minimization and a box-constrained
//! Levenberg–Marquardt solver for nonlinear least squares.

use nalgebra::{DMatrix, DVector};

/// Brent's method on `[a, b]`: golden-section steps with parabolic
/// interpolation. Returns `(argmin, min)`.
pub fn brent_minimize<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let tol1 = tol + 1e-12 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            let mut q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Coarse grid scan over `[lo, hi]` followed by Brent refinement around the
/// best grid point. Deterministic; robust to mild multimodality.
pub fn grid_then_brent<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, steps: usize, tol: f64) -> (f64, f64) {
    let h = (hi - lo) / steps as f64;
    let mut best = (lo, f64::INFINITY);
    let mut best_k = 0;
    for k in 0..=steps {
        let x = lo + h * k as f64;
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
            best_k = k;
        }
    }
    if !best.1.is_finite() {
        return best;
    }
    let a = lo + h * best_k.saturating_sub(1) as f64;
    let b = lo + h * (best_k + 1).min(steps) as f64;
    let refined = brent_minimize(&mut f, a, b, tol);
    if refined.1 <= best.1 {
        refined
    } else {
        best
    }
}

/// A nonlinear least-squares problem `min ½‖r(x)‖²`.
pub trait LeastSquares {
    /// Residuals at `x`, or `None` where the model cannot be evaluated.
    fn residuals(&mut self, x: &DVector<f64>) -> Option<DVector<f64>>;
    /// Jacobian of the residuals at `x` (rows: residuals, columns: parameters).
    fn jacobian(&mut self, x: &DVector<f64>) -> Option<DMatrix<f64>>;
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when `‖step‖ <= step_tol * (‖x‖ + step_tol)`.
    pub step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            step_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: DVector<f64>,
    /// `‖r(x)‖²`.
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Levenberg–Marquardt with Marquardt diagonal scaling and Nielsen's damping
/// update. Steps are projected onto the box `[lower, upper]`. Returns `None`
/// if the model cannot be evaluated at `x0`.
pub fn levenberg_marquardt<P: LeastSquares>(
    problem: &mut P,
    x0: DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    opts: LmOptions,
) -> Option<LmOutcome> {
    let mut x = x0.zip_map(lower, f64::max).zip_map(upper, f64::min);
    let mut r = problem.residuals(&x)?;
    let mut jac = problem.jacobian(&x)?;
    let mut rss = r.norm_squared();
    if !rss.is_finite() {
        return None;
    }
    let n = x.len();
    let mut mu = 1e-3;
    let mut growth = 2.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].max(1e-300)).collect();
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        if free.is_empty() {
            converged = true;
            break;
        }
        let m = free.len();
        let damped = DMatrix::from_fn(m, m, |i, j| {
            a[(free[i], free[j])] + if i == j { mu * diag[free[i]] } else { 0.0 }
        });
        let rhs = DVector::from_fn(m, |i, _| -g[free[i]]);
        let Some(reduced) = damped.cholesky().map(|ch| ch.solve(&rhs)) else {
            mu *= growth;
            growth *= 2.0;
            continue;
        };
        let mut step = DVector::zeros(n);
        for (i, &k) in free.iter().enumerate() {
            step[k] = reduced[i];
        }
        let candidate = (&x + &step).zip_map(lower, f64::max).zip_map(upper, f64::min);
        let taken = &candidate - &x;
        if taken.norm() <= opts.step_tol * (x.norm() + opts.step_tol) {
            converged = true;
            break;
        }
        let trial = problem.residuals(&candidate).map(|rt| (rt.norm_squared(), rt));
        match trial {
            Some((rss_new, r_new)) if rss_new.is_finite() && rss_new < rss => {
                let predicted = -(2.0 * g.dot(&taken) + taken.dot(&(&a * &taken)));
                let ratio = if predicted > 0.0 { (rss - rss_new) / predicted } else { 0.5 };
                let Some(jac_new) = problem.jacobian(&candidate) else {
                    mu *= growth;
                    growth *= 2.0;
                    continue;
                };
                x = candidate;
                r = r_new;
                rss = rss_new;
                jac = jac_new;
                mu *= (1.0 - (2.0 * ratio - 1.0).powi(3)).max(1.0 / 3.0);
                growth = 2.0;
            }
            _ => {
                mu *= growth;
                growth *= 2.0;
                if mu > 1e30 {
                    converged = true;
                    break;
                }
            }
        }
    }
    Some(LmOutcome {
        x,
        rss,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_minimum() {
        let (x, fx) = brent_minimize(|x| (x - 1.3).powi(2) + 2.0, -5.0, 5.0, 1e-9);
        assert!((x - 1.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_escapes_local_minimum() {
        let f = |x: f64| (x * x - 4.0).powi(2) + 0.5 * x;
        let (x, _) = grid_then_brent(f, -5.0, 5.0, 40, 1e-8);
        assert!((x + 2.0).abs() < 0.1, "{x}");
    }

    struct Rosenbrock;

    impl LeastSquares for Rosenbrock {
        fn residuals(&mut self, x: &DVector<f64>) -> Option<DVector<f64>> {
            Some(DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]))
        }
        fn jacobian(&mut self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
            Some(DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0]))
        }
    }

    #[test]
    fn lm_solves_rosenbrock() {
        let lo = DVector::from_element(2, -10.0);
        let hi = DVector::from_element(2, 10.0);
        let x0 = DVector::from_vec(vec![-1.2, 1.0]);
        let out = levenberg_marquardt(&mut Rosenbrock, x0, &lo, &hi, LmOptions { max_iter: 200, step_tol: 1e-12 }).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-8 && (out.x[1] - 1.0).abs() < 1e-8, "{}", out.x);
    }

    #[test]
    fn lm_respects_bounds() {
        let lo = DVector::from_vec(vec![-10.0, -10.0]);
        let hi = DVector::from_vec(vec![0.5, 10.0]);
        let x0 = DVector::from_vec(vec![-1.2, 1.0]);
        let out = levenberg_marquardt(&mut Rosenbrock, x0, &lo, &hi, LmOptions { max_iter: 200, step_tol: 1e-12 }).unwrap();
        assert!(out.x[0] <= 0.5);
        assert!((out.x[0] - 0.5).abs() < 1e-6 && (out.x[1] - 0.25).abs() < 1e-6, "{}", out.x);
    }
}
