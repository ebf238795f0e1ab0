//! Distribution quantiles by bisection on regularized special functions.

use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma_lr;

const TOL: f64 = 1e-10;

/// Bisection for the `p`-quantile of a continuous CDF that is increasing on
/// `[lo, hi]`.
fn invert(cdf: impl Fn(f64) -> f64, p: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo <= TOL * hi.abs().max(1.0) * 1e-2 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Quantile of `Beta(a, b)`.
pub fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "Beta parameters must be positive");
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    invert(|x| beta_reg(a, b, x), p, 0.0, 1.0)
}

/// Quantile of `Gamma(shape, rate)`.
pub fn gamma_quantile(shape: f64, rate: f64, p: f64) -> f64 {
    assert!(shape > 0.0 && rate > 0.0, "Gamma parameters must be positive");
    if p <= 0.0 {
        return 0.0;
    }
    let cdf = |x: f64| gamma_lr(shape, x * rate);
    let mut hi = (shape / rate).max(1.0 / rate);
    while cdf(hi) < p {
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    invert(cdf, p, 0.0, hi)
}

/// Quantile of Student's t with `df` degrees of freedom, through the
/// relation between the t tail and the incomplete beta function.
pub fn student_t_quantile(df: f64, p: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -student_t_quantile(df, 1.0 - p);
    }
    // P(|T| > t) = I_{df/(df+t²)}(df/2, 1/2)
    let x = beta_quantile(df / 2.0, 0.5, 2.0 * (1.0 - p));
    (df * (1.0 - x) / x).sqrt()
}
