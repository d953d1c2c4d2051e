//! Small statistics helpers shared by the oracles and the harness.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UsfError};

/// Delete-one-block jackknife standard error of a ratio-free mean, given
/// per-block sums and per-block sample counts.
pub fn jackknife_std_error(block_sums: &[f64], block_counts: &[f64]) -> f64 {
    let nb = block_sums.len();
    if nb < 2 {
        return f64::NAN;
    }
    let total: f64 = block_sums.iter().sum();
    let count: f64 = block_counts.iter().sum();
    let leave_out: Vec<f64> = block_sums
        .iter()
        .zip(block_counts)
        .map(|(s, c)| (total - s) / (count - c))
        .collect();
    let mean = leave_out.iter().sum::<f64>() / nb as f64;
    let var = leave_out.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    ((nb as f64 - 1.0) / nb as f64 * var).sqrt()
}

/// Result of a log-linear least-squares fit `y ≈ exp(intercept − rate·t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    /// Positive for decaying series.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Set when `r_squared < 0.8`.
    pub poor_fit: bool,
    pub n_points: usize,
}

/// Fits the last `window` fraction of the series by least squares on
/// `(t, ln y)`.
pub fn fit_exponential(times: &[f64], values: &[f64], window: f64) -> Result<ExpFit> {
    if times.len() != values.len() {
        return Err(UsfError::Fit("times and values differ in length".into()));
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(UsfError::Fit(format!("window fraction {window} not in (0, 1]")));
    }
    let n = times.len();
    let take = ((n as f64 * window).ceil() as usize).min(n);
    if take < 2 {
        return Err(UsfError::Fit(format!("need at least two samples in the window, have {take}")));
    }
    let ts = &times[n - take..];
    let ys = &values[n - take..];
    if let Some(bad) = ys.iter().find(|y| !(**y > 0.0)) {
        return Err(UsfError::Fit(format!("nonpositive value {bad} in fit window")));
    }
    let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = take as f64;
    let t_mean = ts.iter().sum::<f64>() / m;
    let l_mean = logs.iter().sum::<f64>() / m;
    let sxx: f64 = ts.iter().map(|t| (t - t_mean).powi(2)).sum();
    let sxy: f64 = ts.iter().zip(&logs).map(|(t, l)| (t - t_mean) * (l - l_mean)).sum();
    let syy: f64 = logs.iter().map(|l| (l - l_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(UsfError::Fit("all fit times coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = l_mean - slope * t_mean;
    // A flat series is explained perfectly by the zero-slope model.
    let r_squared = if syy <= f64::EPSILON * f64::EPSILON * m {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Ok(ExpFit {
        rate: -slope,
        intercept,
        r_squared,
        poor_fit: r_squared < 0.8,
        n_points: take,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pure_exponential() {
        let t: Vec<f64> = (0..=100).map(|i| i as f64 * 0.05).collect();
        let y: Vec<f64> = t.iter().map(|t| (-2.0 * t).exp()).collect();
        let fit = fit_exponential(&t, &y, 0.5).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-6);
        assert!(fit.intercept.abs() < 1e-9);
        assert!(!fit.poor_fit);
    }

    #[test]
    fn noisy_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|t| 3.0 * (-0.5 * t).exp() + 1e-4 * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let fit = fit_exponential(&t, &y, 0.5).unwrap();
        assert!((fit.rate - 0.5).abs() < 1e-2, "rate {}", fit.rate);
    }

    #[test]
    fn constant_series() {
        let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y = vec![0.7; 50];
        let fit = fit_exponential(&t, &y, 0.5).unwrap();
        assert!(fit.rate.abs() < 1e-9);
    }

    #[test]
    fn rejects_nonpositive_window() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert!(fit_exponential(&t, &[1.0, 0.5, 0.0, 0.1], 0.5).is_err());
        // the nonpositive value lies outside the last-half window
        assert!(fit_exponential(&t, &[-1.0, 0.5, 0.2, 0.1], 0.5).is_ok());
    }

    #[test]
    fn jackknife_matches_standard_error_for_singleton_blocks() {
        let xs = [1.0, 2.0, 4.0, 7.0, 11.0];
        let se = jackknife_std_error(&xs, &[1.0; 5]);
        let mean = xs.iter().sum::<f64>() / 5.0;
        let s2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((se - (s2 / 5.0).sqrt()).abs() < 1e-12);
    }
}
