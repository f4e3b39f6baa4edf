//! Least-squares fit of `ln y = intercept + slope * x` for rate estimation.

use crate::error::{IqvipError, Result};

/// Minimum number of points a rate fit accepts.
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Outcome of fitting the tail of a decaying error sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum TailFit {
    Fit(LogLinearFit),
    /// The tail starts at an exact zero.
    ExactConvergence,
}

/// Fits the trailing `tail_fraction` of `(x, y)`. Points after the first
/// `y == 0` in the tail are dropped.
pub(crate) fn fit_tail(xs: &[f64], ys: &[f64], tail_fraction: f64) -> Result<TailFit> {
    debug_assert_eq!(xs.len(), ys.len());
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(IqvipError::InvalidArgument(format!(
            "tail_fraction must lie in (0, 1], got {tail_fraction}"
        )));
    }
    let n = xs.len();
    let take = ((n as f64) * tail_fraction).ceil() as usize;
    let start = n - take.min(n);
    let (xs, ys) = (&xs[start..], &ys[start..]);
    let cut = ys.iter().position(|&y| y == 0.0);
    let (xs, ys) = match cut {
        Some(0) => return Ok(TailFit::ExactConvergence),
        Some(k) => (&xs[..k], &ys[..k]),
        None => (xs, ys),
    };
    if cut.is_none() && xs.len() < MIN_FIT_POINTS {
        return Err(IqvipError::InsufficientSamples(format!(
            "rate fit needs at least {MIN_FIT_POINTS} tail points, got {}",
            xs.len()
        )));
    }
    if xs.len() < 2 {
        return Ok(TailFit::ExactConvergence);
    }
    if ys.iter().any(|&y| !(y > 0.0) || !y.is_finite()) {
        return Err(IqvipError::InvalidArgument(
            "rate fit needs positive finite values".into(),
        ));
    }
    let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    Ok(TailFit::Fit(least_squares(xs, &logs)))
}

/// Ordinary least squares line through `(x, y)`. A constant `y` counts as a
/// perfect fit.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> LogLinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // Relative to the spread of y so that roundoff on flat data reads as a
    // perfect fit.
    let flat = syy <= 1e-24 * (1.0 + my * my) * n;
    let slope = if sxx > 0.0 && !flat { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if flat {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    LogLinearFit { slope, intercept, r_squared, points: xs.len() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = least_squares(&xs, &ys);
        assert!((f.slope + 0.5).abs() < 1e-12 && (f.intercept - 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tail_cut_at_zero() {
        let xs: Vec<f64> = (0..30).map(f64::from).collect();
        let mut ys: Vec<f64> = xs.iter().map(|x| (-0.3 * x).exp()).collect();
        ys[25] = 0.0;
        match fit_tail(&xs, &ys, 1.0).unwrap() {
            TailFit::Fit(f) => {
                assert_eq!(f.points, 25);
                assert!((f.slope + 0.3).abs() < 1e-12);
            }
            TailFit::ExactConvergence => panic!("expected a fit"),
        }
    }

    #[test]
    fn all_zero_tail() {
        let xs: Vec<f64> = (0..30).map(f64::from).collect();
        let ys = vec![0.0; 30];
        assert_eq!(fit_tail(&xs, &ys, 0.5).unwrap(), TailFit::ExactConvergence);
    }

    #[test]
    fn short_tail_is_rejected() {
        let xs: Vec<f64> = (0..5).map(f64::from).collect();
        let ys = vec![1.0; 5];
        assert!(matches!(fit_tail(&xs, &ys, 1.0), Err(IqvipError::InsufficientSamples(_))));
    }
}
