//! Chi-square quantiles from the regularized incomplete gamma function.

use super::WrapperError;

const LANCZOS: [f64; 9] = [
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

/// `ln Γ(a)` for `a > 0` (Lanczos, g = 7).
pub fn ln_gamma(a: f64) -> f64 {
    if a < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * a).sin()).ln() - ln_gamma(1.0 - a);
    }
    let a = a - 1.0;
    let mut x = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        x += c / (a + i as f64);
    }
    let t = a + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (a + 0.5) * t.ln() - t + x.ln()
}

/// Regularized lower and upper incomplete gamma `(P(a,x), Q(a,x))`.
pub fn incomplete_gamma(a: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    let log_pref = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // series
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        let p = (sum.ln() + log_pref).exp().min(1.0);
        (p, 1.0 - p)
    } else {
        // continued fraction, modified Lentz
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (h.ln() + log_pref).exp().min(1.0);
        (1.0 - q, q)
    }
}

pub fn chi2_cdf(n: usize, x: f64) -> f64 {
    incomplete_gamma(n as f64 / 2.0, x / 2.0).0
}

/// Smallest `c` with `P(n/2, c/2) = prob`, to 1e-10 absolute.
///
/// For `prob > 0.5` the search runs on the upper tail `Q = 1 − prob` so that
/// quantiles near 1 keep their accuracy.
pub fn chi2_quantile(n: usize, prob: f64) -> Result<f64, WrapperError> {
    if n == 0 {
        return Err(WrapperError::invalid("chi-square needs n >= 1"));
    }
    if !(prob > 0.0 && prob < 1.0) {
        return Err(WrapperError::invalid(format!("probability {prob} outside (0, 1)")));
    }
    let a = n as f64 / 2.0;
    let upper = prob > 0.5;
    let target = if upper { 1.0 - prob } else { prob };
    // f is increasing in c
    let f = |c: f64| {
        let (p, q) = incomplete_gamma(a, c / 2.0);
        if upper {
            target - q
        } else {
            p - target
        }
    };
    let mut lo = 0.0;
    let mut hi = (n as f64).max(1.0);
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(WrapperError::invalid("chi-square quantile out of range"));
        }
    }
    while hi - lo > 1e-11 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
