//! Clamped B-splines on [0, 1].

use nalgebra::DMatrix;

const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Knot vector with `order`-fold boundary knots at 0 and 1.
pub(crate) fn clamped_knots(interior: &[f64], order: usize) -> Vec<f64> {
    let mut knots = Vec::with_capacity(interior.len() + 2 * order);
    knots.extend(std::iter::repeat_n(0.0, order));
    knots.extend_from_slice(interior);
    knots.extend(std::iter::repeat_n(1.0, order));
    knots
}

/// Index `i` of the knot span with `knots[i] <= t < knots[i+1]`, restricted to
/// non-degenerate spans; `t` at the right end maps to the last span.
fn find_span(knots: &[f64], order: usize, t: f64) -> usize {
    let n_basis = knots.len() - order;
    let lo = order - 1;
    let hi = n_basis - 1;
    if t >= knots[hi + 1] {
        return hi;
    }
    if t <= knots[lo] {
        return lo;
    }
    // largest i in [lo, hi] with knots[i] <= t
    let mut a = lo;
    let mut b = hi + 1;
    while b - a > 1 {
        let mid = (a + b) / 2;
        if knots[mid] <= t {
            a = mid;
        } else {
            b = mid;
        }
    }
    a
}

/// Values of the `order` basis functions that are nonzero on `span`.
fn basis_funs(knots: &[f64], order: usize, span: usize, t: f64, out: &mut [f64]) {
    let degree = order - 1;
    let mut left = [0.0; 8];
    let mut right = [0.0; 8];
    out[0] = 1.0;
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom > 0.0 { out[r] / denom } else { 0.0 };
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

/// A spline in B-spline form.
#[derive(Debug, Clone, PartialEq)]
pub struct BSpline {
    knots: Vec<f64>,
    coefs: Vec<f64>,
    order: usize,
}

impl BSpline {
    pub(crate) fn new(knots: Vec<f64>, coefs: Vec<f64>, order: usize) -> Self {
        debug_assert_eq!(knots.len(), coefs.len() + order);
        debug_assert!((1..=8).contains(&order));
        Self {
            knots,
            coefs,
            order,
        }
    }

    /// Polynomial order (degree + 1).
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefs
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        let span = find_span(&self.knots, self.order, t);
        let mut n = [0.0; 8];
        basis_funs(&self.knots, self.order, span, t, &mut n);
        let first = span + 1 - self.order;
        (0..self.order).map(|j| self.coefs[first + j] * n[j]).sum()
    }

    /// Exact derivative as a spline of one order lower.
    pub fn derivative(&self) -> BSpline {
        let k = self.order;
        if k == 1 {
            return BSpline::new(self.knots.clone(), vec![0.0; self.coefs.len()], 1);
        }
        let coefs = derivative_coefs(&self.knots, k, &self.coefs);
        let knots = self.knots[1..self.knots.len() - 1].to_vec();
        BSpline::new(knots, coefs, k - 1)
    }

    pub(crate) fn scaled(&self, factor: f64) -> BSpline {
        BSpline::new(
            self.knots.clone(),
            self.coefs.iter().map(|c| c * factor).collect(),
            self.order,
        )
    }
}

fn derivative_coefs(knots: &[f64], order: usize, coefs: &[f64]) -> Vec<f64> {
    let deg = (order - 1) as f64;
    (0..coefs.len() - 1)
        .map(|i| {
            let h = knots[i + order] - knots[i + 1];
            if h > 0.0 {
                deg * (coefs[i + 1] - coefs[i]) / h
            } else {
                0.0
            }
        })
        .collect()
}

/// Number of basis functions for a knot vector.
pub(crate) fn basis_len(knots: &[f64], order: usize) -> usize {
    knots.len() - order
}

/// Dense collocation matrix `X[j, i] = B_i(t_j)`.
pub(crate) fn design_matrix(knots: &[f64], order: usize, times: &[f64]) -> DMatrix<f64> {
    let k = basis_len(knots, order);
    let mut x = DMatrix::zeros(times.len(), k);
    let mut n = [0.0; 8];
    for (row, &t) in times.iter().enumerate() {
        let span = find_span(knots, order, t);
        basis_funs(knots, order, span, t, &mut n);
        let first = span + 1 - order;
        for j in 0..order {
            x[(row, first + j)] = n[j];
        }
    }
    x
}

/// Matrix mapping coefficients to the coefficients of the `q`-th derivative.
fn derivative_operator(knots: &[f64], order: usize, q: usize) -> DMatrix<f64> {
    let k = basis_len(knots, order);
    let mut op = DMatrix::<f64>::identity(k, k);
    let mut cur_knots = knots.to_vec();
    let mut cur_order = order;
    for _ in 0..q {
        let rows = op.nrows() - 1;
        let deg = (cur_order - 1) as f64;
        let mut step = DMatrix::zeros(rows, op.nrows());
        for i in 0..rows {
            let h = cur_knots[i + cur_order] - cur_knots[i + 1];
            if h > 0.0 {
                step[(i, i)] = -deg / h;
                step[(i, i + 1)] = deg / h;
            }
        }
        op = step * op;
        cur_knots = cur_knots[1..cur_knots.len() - 1].to_vec();
        cur_order -= 1;
    }
    op
}

/// Gram matrix of the B-spline basis, integrated exactly over [0, 1].
fn gram_matrix(knots: &[f64], order: usize) -> DMatrix<f64> {
    let k = basis_len(knots, order);
    let mut g = DMatrix::zeros(k, k);
    let mut n = [0.0; 8];
    for span in (order - 1)..k {
        let (a, b) = (knots[span], knots[span + 1]);
        if b <= a {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (&x, &w) in GAUSS_NODES.iter().zip(&GAUSS_WEIGHTS) {
            let t = mid + half * x;
            basis_funs(knots, order, span, t, &mut n);
            let first = span + 1 - order;
            for i in 0..order {
                for j in 0..order {
                    g[(first + i, first + j)] += w * half * n[i] * n[j];
                }
            }
        }
    }
    g
}

/// Penalty matrix `S` with `c' S c = \int_0^1 (D^q s)^2`.
pub(crate) fn penalty_matrix(knots: &[f64], order: usize, q: usize) -> DMatrix<f64> {
    assert!(q < order, "penalty order must be below spline order");
    let d = derivative_operator(knots, order, q);
    let reduced = &knots[q..knots.len() - q];
    let g = gram_matrix(reduced, order - q);
    let s = d.transpose() * g * &d;
    // symmetrize away rounding asymmetry
    (&s + s.transpose()) * 0.5
}

/// Coefficients of the monomials `t^r`, `r < q`, in the basis (Marsden's identity).
pub(crate) fn polynomial_coefs(knots: &[f64], order: usize, q: usize) -> DMatrix<f64> {
    let k = basis_len(knots, order);
    let inner = order - 1;
    let mut out = DMatrix::zeros(k, q);
    for i in 0..k {
        let t = &knots[i + 1..i + order];
        for r in 0..q {
            out[(i, r)] = elementary_symmetric(t, r) / binomial(inner, r);
        }
    }
    out
}

fn elementary_symmetric(xs: &[f64], r: usize) -> f64 {
    let mut e = vec![0.0; r + 1];
    e[0] = 1.0;
    for &x in xs {
        for j in (1..=r).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e[r]
}

fn binomial(n: usize, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
