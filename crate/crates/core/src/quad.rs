//! Uniform-grid quadrature shared by the curve and warp modules.

/// Default number of grid points used for maps and definite integrals.
pub const DEFAULT_GRID: usize = 1001;

/// `n` equispaced points on [0, 1], endpoints exact.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    assert!(n >= 2, "grid needs at least two points");
    let last = (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { 1.0 } else { k as f64 / last })
        .collect()
}

/// Composite trapezoid rule for samples on a uniform grid over [0, 1].
pub fn trapezoid(values: &[f64]) -> f64 {
    let n = values.len();
    assert!(n >= 2, "trapezoid needs at least two samples");
    let h = 1.0 / (n - 1) as f64;
    let interior: f64 = values[1..n - 1].iter().sum();
    h * (interior + 0.5 * (values[0] + values[n - 1]))
}

/// Running trapezoid integral; element `k` is the integral over [0, t_k].
pub fn cumulative_trapezoid(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let h = 1.0 / (n - 1) as f64;
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// A real function of one variable on [0, 1].
pub trait RealFn {
    fn value(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64> RealFn for F {
    fn value(&self, t: f64) -> f64 {
        self(t)
    }
}

/// Samples `f` on the uniform grid of size `n`.
pub fn sample<F: RealFn + ?Sized>(f: &F, n: usize) -> Vec<f64> {
    uniform_grid(n).into_iter().map(|t| f.value(t)).collect()
}
