use serde::Serialize;

use crate::agents::fit_loglog_slope;
use crate::error::{Error, Result};
use crate::harness::ledger::RegretLedger;

/// Simple moving average with shorter windows at the start.
pub fn rolling_average(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Pointwise mean of equally long series.
pub fn mean_series(series: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = series.first() else {
        return Vec::new();
    };
    let n = series.len() as f64;
    (0..first.len())
        .map(|i| series.iter().map(|s| s[i]).sum::<f64>() / n)
        .collect()
}

/// Least-squares power-law fit of regret against the horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub intercept: f64,
    pub std_error: f64,
    /// `exponent -/+ 2 std_error`.
    pub band: (f64, f64),
    pub points_used: usize,
    /// Grid points dropped because the regret there was not positive.
    pub excluded: Vec<usize>,
}

/// Powers of two from 16 up to `len`.
pub fn default_grid(len: usize) -> Vec<usize> {
    (4..usize::BITS)
        .map(|e| 1usize << e)
        .take_while(|&t| t <= len)
        .collect()
}

/// Fits `ln R = intercept + exponent * ln T` over `(T, R)` pairs, dropping `R <= 0`.
pub fn fit_power_law(points: &[(usize, f64)]) -> Result<ExponentFit> {
    let excluded: Vec<usize> = points.iter().filter(|p| !(p.1 > 0.0)).map(|p| p.0).collect();
    let used: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.1 > 0.0 && p.0 > 0)
        .map(|&(t, r)| (t as f64, r))
        .collect();
    let (exponent, intercept) = fit_loglog_slope(used.iter().copied()).ok_or_else(|| {
        Error::Fit(format!(
            "need at least 2 grid points with positive regret, have {}",
            used.len()
        ))
    })?;
    let n = used.len();
    let std_error = if n > 2 {
        let mx = used.iter().map(|p| p.0.ln()).sum::<f64>() / n as f64;
        let sxx: f64 = used.iter().map(|p| (p.0.ln() - mx).powi(2)).sum();
        let ssr: f64 = used
            .iter()
            .map(|p| (p.1.ln() - intercept - exponent * p.0.ln()).powi(2))
            .sum();
        (ssr / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(ExponentFit {
        exponent,
        intercept,
        std_error,
        band: (exponent - 2.0 * std_error, exponent + 2.0 * std_error),
        points_used: n,
        excluded,
    })
}

/// Slope of `ln R_sw(T)` against `ln T` on `t_grid`.
pub fn fit_regret_exponent(ledger: &RegretLedger, t_grid: &[usize]) -> Result<ExponentFit> {
    if let Some(&t) = t_grid.iter().find(|&&t| t == 0 || t > ledger.len()) {
        return Err(Error::Fit(format!(
            "grid point {t} outside the ledger (length {})",
            ledger.len()
        )));
    }
    let points: Vec<(usize, f64)> = t_grid.iter().map(|&t| (t, ledger.regret_at(t))).collect();
    fit_power_law(&points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ledger::{EpisodeRecord, Phase};

    #[test]
    fn rolling_examples() {
        let s = [0.0, 1.0, 0.0, 1.0];
        assert_eq!(rolling_average(&s, 1), s.to_vec());
        assert_eq!(rolling_average(&s, 2), vec![0.0, 0.5, 0.5, 0.5]);
        assert!(rolling_average(&[3.5; 10], 4).iter().all(|&x| (x - 3.5).abs() < 1e-15));
        assert!(rolling_average(&[], 3).is_empty());
    }

    fn synthetic(f: impl Fn(f64) -> f64, len: usize) -> RegretLedger {
        // welfare chosen so that R_sw(T) = f(T) exactly with W* = 10
        let records = (1..=len)
            .map(|k| EpisodeRecord {
                episode: k,
                phase: Phase::Baseline,
                agent_return: 0.0,
                principal_return: 0.0,
                welfare: 10.0 - (f(k as f64) - f(k as f64 - 1.0)),
                terminal_pollution: None,
                seed: 0,
            })
            .collect();
        RegretLedger::new(10.0, records)
    }

    #[test]
    fn linear_regret_has_unit_exponent() {
        let l = synthetic(|t| t, 4096);
        let fit = fit_regret_exponent(&l, &default_grid(4096)).unwrap();
        assert!((fit.exponent - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sqrt_regret_has_half_exponent() {
        let l = synthetic(f64::sqrt, 4096);
        let fit = fit_regret_exponent(&l, &default_grid(4096)).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-6);
    }

    #[test]
    fn nonpositive_points_are_excluded() {
        let fit = fit_power_law(&[(16, -1.0), (32, 2.0), (64, 4.0)]).unwrap();
        assert_eq!(fit.excluded, vec![16]);
        assert_eq!(fit.points_used, 2);
        assert!(fit_power_law(&[(16, -1.0), (32, 2.0)]).is_err());
    }

    #[test]
    fn grid_outside_ledger_is_an_error() {
        let l = synthetic(|t| t, 10);
        assert!(fit_regret_exponent(&l, &[4, 20]).is_err());
    }
}
