//! Special functions: modified Bessel function of the second kind in log
//! space, log-gamma and the standard normal CDF.

use std::f64::consts::{LN_2, PI};

pub use statrs::function::gamma::ln_gamma;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// Standard normal cumulative distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

fn chebev(c: &[f64], x: f64) -> f64 {
    let y2 = 2.0 * x;
    let (mut d, mut dd) = (0.0, 0.0);
    for &cj in c[1..].iter().rev() {
        let sv = d;
        d = y2 * d - dd + cj;
        dd = sv;
    }
    x * d - dd + 0.5 * c[0]
}

/// Temme's auxiliary gamma quantities for `|mu| <= 1/2`:
/// `(gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu))`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    const C1: [f64; 7] = [
        -1.142_022_680_371_168e0,
        6.516_511_267_073_7e-3,
        3.087_090_173_086e-4,
        -3.470_626_964_9e-6,
        6.943_766_4e-9,
        3.677_95e-11,
        -1.356e-13,
    ];
    const C2: [f64; 8] = [
        1.843_740_587_300_905e0,
        -7.685_284_084_478_67e-2,
        1.271_927_136_654_6e-3,
        -4.971_736_704_2e-6,
        -3.312_611_98e-8,
        2.423_096e-10,
        -1.702e-13,
        -1.49e-15,
    ];
    let xx = 8.0 * mu * mu - 1.0;
    let gam1 = chebev(&C1, xx);
    let gam2 = chebev(&C2, xx);
    (gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1)
}

/// `(K_mu(x) e^x, K_{mu+1}(x) e^x)` for `|mu| <= 1/2`, `x > 0`.
fn scaled_k_low_order(mu: f64, x: f64) -> (f64, f64) {
    if x < 2.0 {
        let x2 = 0.5 * x;
        let pimu = PI * mu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - mu * mu);
            c *= dd / fi;
            p /= fi - mu;
            q /= fi + mu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        let scale = x.exp();
        (sum * scale, sum1 * (2.0 / x) * scale)
    } else {
        // Steed's continued fraction
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut h = d;
        let mut delh = d;
        let (mut q1, mut q2) = (0.0, 1.0);
        let a1 = 0.25 - mu * mu;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * fi;
            c = -a * c / (fi + 1.0);
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                break;
            }
        }
        h *= a1;
        let kmu = (PI / (2.0 * x)).sqrt() / s;
        let k1 = kmu * (mu + x + 0.5 - h) / x;
        (kmu, k1)
    }
}

/// `(ln K_nu(x), ln K_{nu+1}(x))` for `nu >= 0`, `x > 0`.
///
/// Uses Temme's series (x < 2) or Steed's continued fraction (x >= 2) at the
/// fractional order, then forward recurrence in order with running rescaling,
/// so neither overflow at small `x` and large `nu` nor underflow at large `x`
/// occurs.
pub fn ln_bessel_k_pair(nu: f64, x: f64) -> (f64, f64) {
    debug_assert!(nu >= 0.0 && x > 0.0);
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let (mut kmu, mut k1) = scaled_k_low_order(mu, x);
    let mut log_scale = -x;
    let xi2 = 2.0 / x;
    for i in 1..=(nl as usize) {
        let next = (mu + i as f64) * xi2 * k1 + kmu;
        kmu = k1;
        k1 = next;
        if k1 > 1e280 {
            let s = k1;
            kmu /= s;
            k1 /= s;
            log_scale += s.ln();
        }
    }
    (kmu.ln() + log_scale, k1.ln() + log_scale)
}

/// `ln K_nu(x)`.
pub fn ln_bessel_k(nu: f64, x: f64) -> f64 {
    ln_bessel_k_pair(nu.abs(), x).0
}

/// `K_nu(x)`; may over- or underflow where the log form does not.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    ln_bessel_k(nu, x).exp()
}

/// Debye uniform asymptotic expansion of `ln K_nu(x)`, accurate for large `nu`
/// uniformly in `x`. Independent of [`ln_bessel_k`].
pub fn ln_bessel_k_uniform(nu: f64, x: f64) -> f64 {
    let z = x / nu;
    let root = (1.0 + z * z).sqrt();
    let eta = root + (z / (1.0 + root)).ln();
    let p = 1.0 / root;
    let p2 = p * p;
    let u1 = p * (3.0 - 5.0 * p2) / 24.0;
    let u2 = p2 * (81.0 - 462.0 * p2 + 385.0 * p2 * p2) / 1152.0;
    let u3 = p * p2
        * (30375.0 - 369_603.0 * p2 + 765_765.0 * p2 * p2 - 425_425.0 * p2 * p2 * p2)
        / 414_720.0;
    let u4 = p2 * p2
        * (4_465_125.0 - 94_121_676.0 * p2 + 349_922_430.0 * p2.powi(2)
            - 446_185_740.0 * p2.powi(3)
            + 185_910_725.0 * p2.powi(4))
        / 39_813_120.0;
    let series = 1.0 - u1 / nu + u2 / nu.powi(2) - u3 / nu.powi(3) + u4 / nu.powi(4);
    0.5 * (PI / (2.0 * nu)).ln() - nu * eta - 0.25 * (1.0 + z * z).ln() + series.ln()
}

/// Matérn correlation `2^{1-nu}/Gamma(nu) x^nu K_nu(x)` with
/// `x = sqrt(2 nu) d / rho`, evaluated in log space. Equals 1 at `d = 0`.
pub fn matern_correlation(d: f64, nu: f64, rho: f64) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let x = (2.0 * nu).sqrt() * d / rho;
    if x == 0.0 {
        return 1.0;
    }
    if !x.is_finite() {
        return 0.0;
    }
    let log_corr = (1.0 - nu) * LN_2 - ln_gamma(nu) + nu * x.ln() + ln_bessel_k(nu, x);
    if log_corr.is_nan() {
        return 0.0;
    }
    log_corr.exp().clamp(0.0, 1.0)
}
