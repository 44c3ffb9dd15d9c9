//! Beta distribution numerics: log-gamma, regularized incomplete beta,
//! density and quantile.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

const CF_MAX_ITER: usize = 10_000;
const CF_EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Continued fraction for I_x(a, b) (modified Lentz), valid for
/// `x < (a + 1) / (a + b + 2)`.
fn incbeta_cf(a: f64, b: f64, x: f64, ln_beta_ab: f64) -> f64 {
    let ln_prefix = a * x.ln() + b * (-x).ln_1p() - ln_beta_ab;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut f = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + even * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + even / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        f *= d * c;
        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + odd * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + odd / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        f *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            break;
        }
    }
    (ln_prefix.exp() / a) * f
}

/// A Beta(a, b) distribution with its normalizer precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaDist {
    a: f64,
    b: f64,
    ln_beta: f64,
}

impl BetaDist {
    /// Panics unless both parameters are positive and finite; callers
    /// validate first.
    pub fn new(a: f64, b: f64) -> Self {
        assert!(
            a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
            "invalid Beta({a}, {b})"
        );
        Self {
            a,
            b,
            ln_beta: ln_beta(a, b),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.a
    }

    pub fn beta(&self) -> f64 {
        self.b
    }

    /// Regularized incomplete beta function I_x(a, b).
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let (a, b) = (self.a, self.b);
        if x < (a + 1.0) / (a + b + 2.0) {
            incbeta_cf(a, b, x, self.ln_beta)
        } else {
            1.0 - incbeta_cf(b, a, 1.0 - x, self.ln_beta)
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let ln = (self.a - 1.0) * x.ln() + (self.b - 1.0) * (-x).ln_1p() - self.ln_beta;
        if ln.is_nan() {
            // 0 * ln(0) at an endpoint with a unit shape parameter
            return (-self.ln_beta).exp();
        }
        ln.exp()
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

/// Anything with a continuous CDF and density on [0, 1].
pub trait UnitDistribution {
    fn cdf(&self, x: f64) -> f64;
    fn pdf(&self, x: f64) -> f64;
}

impl UnitDistribution for BetaDist {
    fn cdf(&self, x: f64) -> f64 {
        BetaDist::cdf(self, x)
    }
    fn pdf(&self, x: f64) -> f64 {
        BetaDist::pdf(self, x)
    }
}

/// Residual tolerance of the quantile solver.
pub const QUANTILE_TOL: f64 = 1e-13;

/// Solves `cdf(x) = q` on `[lo, hi]` (which must bracket the root) with
/// Newton steps safeguarded by bisection. `guess` seeds the iteration.
pub fn invert_cdf<D: UnitDistribution + ?Sized>(dist: &D, q: f64, lo: f64, hi: f64, guess: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    let mut x = guess.clamp(lo, hi);
    for _ in 0..200 {
        let f = dist.cdf(x) - q;
        if f.abs() <= QUANTILE_TOL {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= f64::EPSILON * hi.max(1e-300) {
            break;
        }
        let d = dist.pdf(x);
        let newton = x - f / d;
        x = if d > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}

/// Quantile of Beta(a, b) for `q` in (0, 1).
pub fn beta_quantile(dist: &BetaDist, q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    invert_cdf(dist, q, 0.0, 1.0, dist.mean())
}
