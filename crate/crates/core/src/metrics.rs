//! Annualized performance statistics of a daily return series.

use serde::{Deserialize, Serialize};

use crate::diffcore::population_std;
use crate::error::{Error, Result};
use crate::portfolio::ANNUALIZATION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub label: String,
    pub ann_return_pct: f64,
    pub ann_vol_pct: f64,
    pub sharpe: f64,
    pub sortino: f64,
    /// Unannualized mean over downside deviation.
    pub daily_sortino: f64,
    pub max_dd_pct: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        num.signum() * f64::INFINITY
    }
}

/// Largest peak-to-trough fall of the equity curve compounded from `returns`
/// starting at 1; zero or negative.
pub fn max_drawdown(returns: &[f64]) -> f64 {
    let (mut equity, mut peak, mut worst) = (1.0f64, 1.0f64, 0.0f64);
    for r in returns {
        equity *= 1.0 + r;
        peak = peak.max(equity);
        worst = worst.min(equity / peak - 1.0);
    }
    worst
}

/// Annualized return and vol (population std), Sharpe, Sortino with a zero
/// target over all days, and maximum drawdown.
pub fn summarize(label: &str, returns: &[f64]) -> Result<MetricSummary> {
    if returns.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{label}: need at least 2 returns, got {}",
            returns.len()
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument(format!("{label}: non-finite return")));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let sd = population_std(returns);
    let downside = (returns.iter().map(|r| r.min(0.0).powi(2)).sum::<f64>() / n).sqrt();
    let ann_return = mean * ANNUALIZATION;
    let ann_vol = sd * ANNUALIZATION.sqrt();
    Ok(MetricSummary {
        label: label.to_string(),
        ann_return_pct: 100.0 * ann_return,
        ann_vol_pct: 100.0 * ann_vol,
        sharpe: ratio(ann_return, ann_vol),
        sortino: ratio(ann_return, ANNUALIZATION.sqrt() * downside),
        daily_sortino: ratio(mean, downside),
        max_dd_pct: 100.0 * max_drawdown(returns),
    })
}

/// Compounded cumulative return in percent after each day.
pub fn cumulative_pct(returns: &[f64]) -> Vec<f64> {
    let mut equity = 1.0;
    returns
        .iter()
        .map(|r| {
            equity *= 1.0 + r;
            100.0 * (equity - 1.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sortino_example() {
        let m = summarize("x", &[0.02, -0.01, 0.03, -0.02]).unwrap();
        assert!((m.daily_sortino - 0.4472).abs() < 5e-5);
        let expect = 0.005 / (0.0005f64 / 4.0).sqrt();
        assert!((m.daily_sortino - expect).abs() < 1e-12);
        assert!((m.sortino - expect * 252f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn drawdown_examples() {
        let m = summarize("x", &[0.1, -0.1, 0.2 / 0.99 + 0.01 / 0.99]).unwrap();
        assert!((m.max_dd_pct + 10.0).abs() < 1e-9);
        assert_eq!(summarize("x", &[0.0, 0.01, 0.02]).unwrap().max_dd_pct, 0.0);
    }

    #[test]
    fn degenerate_series() {
        let m = summarize("z", &[0.0; 5]).unwrap();
        assert_eq!((m.sharpe, m.sortino), (0.0, 0.0));
        assert!(summarize("z", &[0.1]).is_err());
    }

    #[test]
    fn sharpe_is_return_over_vol() {
        let m = summarize("x", &[0.01, -0.004, 0.002, 0.006]).unwrap();
        assert!((m.sharpe - m.ann_return_pct / m.ann_vol_pct).abs() < 1e-12);
    }

    #[test]
    fn cumulative_matches_compounding() {
        let r = [0.01, -0.02, 0.005];
        let c = cumulative_pct(&r);
        let expect = (1.01 * 0.98 * 1.005 - 1.0) * 100.0;
        assert!((c[2] - expect).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn scaling_preserves_ratios(
            rs in proptest::collection::vec(-0.05f64..0.05, 3..60),
            c in 0.1f64..5.0,
        ) {
            prop_assume!(rs.iter().any(|r| *r < -1e-4) && population_std(&rs) > 1e-6);
            let a = summarize("a", &rs).unwrap();
            let scaled: Vec<f64> = rs.iter().map(|r| r * c).collect();
            let b = summarize("b", &scaled).unwrap();
            prop_assert!((b.ann_return_pct - c * a.ann_return_pct).abs() < 1e-9);
            prop_assert!((b.ann_vol_pct - c * a.ann_vol_pct).abs() < 1e-9);
            prop_assert!((b.sharpe - a.sharpe).abs() < 1e-9 * a.sharpe.abs().max(1.0));
            prop_assert!((b.sortino - a.sortino).abs() < 1e-9 * a.sortino.abs().max(1.0));
        }
    }
}
