//! Ordinary least squares for a single regressor, shared by every log-scale fit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressionError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("regressor has zero variance")]
    DegenerateX,
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope with n - 2 degrees of freedom.
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Fits `y = intercept + slope * x`. Requires at least three points so the
/// slope standard error is defined.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit, RegressionError> {
    assert_eq!(x.len(), y.len(), "ols: x and y lengths differ");
    let n = x.len();
    if n < 3 {
        return Err(RegressionError::TooFewPoints { needed: 3, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(RegressionError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - intercept - slope * xi;
            r * r
        })
        .sum();
    let slope_stderr = (sse / (nf - 2.0) / sxx).sqrt();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let fit = ols(&x, &y).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-14);
        assert!((fit.intercept - 2.0).abs() < 1e-14);
        assert!(fit.slope_stderr < 1e-14);
        assert!((fit.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn known_stderr() {
        // hand computed: sxy 3, sxx 5, slope 0.6, residuals 0.4 -1.2 1.2 -0.4, sse 3.2
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 0.0, 3.0, 2.0];
        let fit = ols(&x, &y).unwrap();
        assert!((fit.slope - 0.6).abs() < 1e-12);
        assert!((fit.slope_stderr - (3.2f64 / 2.0 / 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(ols(&[1.0, 2.0], &[1.0, 2.0]), Err(RegressionError::TooFewPoints { .. })));
        assert_eq!(ols(&[1.0; 3], &[1.0, 2.0, 3.0]), Err(RegressionError::DegenerateX));
        assert_eq!(ols(&[1.0, 2.0, 3.0], &[1.0, f64::NAN, 3.0]), Err(RegressionError::NonFinite));
    }
}
