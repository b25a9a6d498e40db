//! Ordinary least-squares line fits used by the scaling studies.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const MIN_FIT_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub points: usize,
}

impl LineFit {
    /// Half-width of the two-sided confidence interval of the slope.
    pub fn slope_halfwidth(&self, level: f64) -> f64 {
        let dof = self.points.saturating_sub(2);
        if dof == 0 || self.stderr == 0.0 {
            return 0.0;
        }
        let t = StudentsT::new(0.0, 1.0, dof as f64).expect("positive degrees of freedom");
        t.inverse_cdf(0.5 + 0.5 * level) * self.stderr
    }

    /// Upper end of the two-sided `level` interval lies below zero.
    pub fn negative_with_confidence(&self, level: f64) -> bool {
        self.slope + self.slope_halfwidth(level) < 0.0
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Fits `y = intercept + slope x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidParams("fit inputs differ in length".into()));
    }
    let n = x.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints { needed: MIN_FIT_POINTS, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("non-finite value in fit input".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParams("fit abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = (sse / (nf - 2.0) / sxx).sqrt();
    Ok(LineFit { slope, intercept, stderr, points: n })
}

/// Fits `log y` against `log x`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

/// Fits `log y` against `1 / x`.
pub fn fit_log_inverse(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let ix: Vec<f64> = x.iter().map(|v| 1.0 / v).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&ix, &ly)
}
