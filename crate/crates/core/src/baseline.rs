//! Classical comparison methods: log-growth moments and a log-linear
//! regression extinction interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::student_t_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthMoments {
    /// Mean of `log(N(t+1)/N(t))`.
    pub r_d: f64,
    /// Unbiased sample variance of the same ratios.
    pub v_r: f64,
}

fn check_positive(n: &[f64]) -> Result<()> {
    if let Some((t, x)) = n.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "abundance at t = {t} is {x}; logs need positive values"
        )));
    }
    Ok(())
}

pub fn log_growth_moments(n: &[f64]) -> Result<GrowthMoments> {
    if n.len() < 2 {
        return Err(Error::InvalidParameter("need at least two abundances".into()));
    }
    check_positive(n)?;
    let rates: Vec<f64> = n.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let m = rates.len() as f64;
    let r_d = rates.iter().sum::<f64>() / m;
    let v_r = if rates.len() < 2 {
        0.0
    } else {
        rates.iter().map(|r| (r - r_d).powi(2)).sum::<f64>() / (m - 1.0)
    };
    Ok(GrowthMoments { r_d, v_r })
}

/// Ordinary least squares of `log N(t)` on `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residual standard deviation with `n − 2` degrees of freedom.
    pub sigma: f64,
    pub n: usize,
    pub mean_t: f64,
    pub sxx: f64,
}

impl LogLinearFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.intercept + self.slope * t
    }

    /// Half-width of the mean-response band at `t` for critical value `q`.
    pub fn half_width(&self, t: f64, q: f64) -> f64 {
        q * self.sigma * (1.0 / self.n as f64 + (t - self.mean_t).powi(2) / self.sxx).sqrt()
    }
}

pub fn fit_log_linear(n: &[f64]) -> Result<LogLinearFit> {
    if n.len() < 3 {
        return Err(Error::InvalidParameter("regression needs at least three abundances".into()));
    }
    check_positive(n)?;
    let y: Vec<f64> = n.iter().map(|x| x.ln()).collect();
    let count = y.len() as f64;
    let mean_t = (count - 1.0) / 2.0;
    let mean_y = y.iter().sum::<f64>() / count;
    let sxx: f64 = (0..y.len()).map(|t| (t as f64 - mean_t).powi(2)).sum();
    let sxy: f64 = y.iter().enumerate().map(|(t, v)| (t as f64 - mean_t) * (v - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_t;
    let sse: f64 = y
        .iter()
        .enumerate()
        .map(|(t, v)| (v - intercept - slope * t as f64).powi(2))
        .sum();
    Ok(LogLinearFit {
        slope,
        intercept,
        sigma: (sse / (count - 2.0)).sqrt(),
        n: y.len(),
        mean_t,
        sxx,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionInterval {
    /// Generations after the last observation, rounded down.
    pub lower: u64,
    /// Generations after the last observation, rounded up.
    pub upper: u64,
    /// Unrounded crossing times of the lower and upper band with `log N = 0`,
    /// on the original time axis.
    pub lower_crossing: f64,
    pub upper_crossing: f64,
    pub fit: LogLinearFit,
}

/// Times at which the lower and upper confidence lines of the mean
/// response reach `N = 1`.
///
/// The band is `ŷ(t) ± q·σ·sqrt(1/n + (t − t̄)²/Sxx)` with `q` the
/// `(1+level)/2` quantile of Student's t on `n − 2` degrees of freedom.
/// Crossings solve a quadratic in `t` exactly.
pub fn regression_extinction_interval(n: &[f64], level: f64) -> Result<RegressionInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0,1), got {level}")));
    }
    let fit = fit_log_linear(n)?;
    if !(fit.slope < 0.0) {
        return Err(Error::NoDecline { slope: fit.slope });
    }
    let q = student_t_quantile(fit.n as f64 - 2.0, (1.0 + level) / 2.0);
    // (a + b t)² = q²σ²(1/n + (t − t̄)²/Sxx), a + b t = ŷ(t)
    let (a, b) = (fit.intercept, fit.slope);
    let c2 = q * q * fit.sigma * fit.sigma;
    let qa = b * b - c2 / fit.sxx;
    let qb = 2.0 * a * b + 2.0 * c2 * fit.mean_t / fit.sxx;
    let qc = a * a - c2 * (1.0 / fit.n as f64 + fit.mean_t * fit.mean_t / fit.sxx);
    let roots = quadratic_roots(qa, qb, qc);
    // lower line ŷ − h hits 0 while ŷ ≥ 0; upper line ŷ + h hits 0 while ŷ ≤ 0
    let lower_crossing = roots
        .iter()
        .copied()
        .filter(|&t| fit.predict(t) >= 0.0)
        .fold(f64::NAN, f64::min);
    let upper_crossing = roots
        .iter()
        .copied()
        .filter(|&t| fit.predict(t) <= 0.0 && qa > 0.0)
        .fold(f64::NAN, f64::max);
    if lower_crossing.is_nan() || upper_crossing.is_nan() {
        return Err(Error::InvalidParameter(
            "confidence band never reaches a single individual; the trend is too uncertain".into(),
        ));
    }
    let last = (fit.n - 1) as f64;
    Ok(RegressionInterval {
        lower: (lower_crossing - last).floor().max(0.0) as u64,
        upper: (upper_crossing - last).ceil().max(0.0) as u64,
        lower_crossing,
        upper_crossing,
        fit,
    })
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-300 {
        return if b != 0.0 { vec![-c / b] } else { vec![] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    // stable form
    let qq = -0.5 * (b + b.signum() * sq);
    let mut roots = vec![qq / a];
    if qq != 0.0 {
        roots.push(c / qq);
    }
    roots
}
