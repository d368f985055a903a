//! Forward-looking volatility-scaled return targets.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::data::{log_returns, PricePanel, DATE_FORMAT};
use crate::diffcore::population_std;
use crate::error::{Error, Result};

pub const HORIZONS: [usize; 3] = [20, 60, 120];
pub const TARGET_CLIP: f64 = 10.0;
pub const TARGET_VOL_FLOOR: f64 = 1e-8;

/// Targets for one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPanel {
    dates: Vec<NaiveDate>,
    horizon: usize,
    n_assets: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl TargetPanel {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn get(&self, t: usize, i: usize) -> Option<f64> {
        let k = t * self.n_assets + i;
        self.valid[k].then(|| self.values[k])
    }
}

/// `ln(P_{t+s}/P_t) / std(r_{t+1..t+s})`, floored and clipped to `[-10, 10]`.
/// Valid only when prices `t..=t+s` are all valid.
pub fn forward_tsmom(panel: &PricePanel, s: usize) -> Result<TargetPanel> {
    if !HORIZONS.contains(&s) {
        return Err(Error::InvalidArgument(format!(
            "target horizon must be one of {HORIZONS:?}, got {s}"
        )));
    }
    let (n_dates, n) = (panel.n_dates(), panel.n_assets());
    let daily = log_returns(panel, 1)?;
    let mut values = vec![f64::NAN; n_dates * n];
    let mut valid = vec![false; n_dates * n];
    for t in 0..n_dates.saturating_sub(s) {
        for i in 0..n {
            let window: Option<Vec<f64>> = (t + 1..=t + s).map(|u| daily.get(u, i)).collect();
            let (Some(window), Some(p0), Some(p1)) = (window, panel.price(t, i), panel.price(t + s, i)) else {
                continue;
            };
            let sd = population_std(&window).max(TARGET_VOL_FLOOR);
            values[t * n + i] = ((p1 / p0).ln() / sd).clamp(-TARGET_CLIP, TARGET_CLIP);
            valid[t * n + i] = true;
        }
    }
    Ok(TargetPanel {
        dates: panel.dates().to_vec(),
        horizon: s,
        n_assets: n,
        values,
        valid,
    })
}

/// Writes `date,asset,target` rows for valid cells.
pub fn write_targets(panel: &PricePanel, targets: &TargetPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("date,asset,target\n");
    for (t, date) in targets.dates.iter().enumerate() {
        for (i, asset) in panel.assets().iter().enumerate() {
            if let Some(v) = targets.get(t, i) {
                out.push_str(&format!("{},{},{v}\n", date.format(DATE_FORMAT), asset.id));
            }
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize_panel, Asset, RegimeSpec, SynthCalendar};

    fn from_log_returns(rs: &[f64]) -> PricePanel {
        let mut p = vec![100.0];
        for r in rs {
            p.push(p.last().unwrap() * r.exp());
        }
        let dates = SynthCalendar::Days {
            start: NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(),
            days: p.len(),
        }
        .dates()
        .unwrap();
        PricePanel::new(
            vec![Asset {
                id: "X".into(),
                class: None,
            }],
            dates,
            p.into_iter().map(Some).collect(),
        )
        .unwrap()
    }

    #[test]
    fn examples() {
        let flat = forward_tsmom(&from_log_returns(&[0.0; 30]), 20).unwrap();
        assert_eq!(flat.get(0, 0), Some(0.0));
        assert_eq!(flat.get(10, 0), Some(0.0));
        assert_eq!(flat.get(11, 0), None);

        let up = forward_tsmom(&from_log_returns(&[0.01; 25]), 20).unwrap();
        assert_eq!(up.get(0, 0), Some(TARGET_CLIP));

        assert!(forward_tsmom(&from_log_returns(&[0.0; 30]), 21).is_err());
    }

    #[test]
    fn sign_flip_negates() {
        let rs: Vec<f64> = (0..80).map(|k| ((k * 7919) % 13) as f64 * 0.001 - 0.006).collect();
        let neg: Vec<f64> = rs.iter().map(|v| -v).collect();
        let a = forward_tsmom(&from_log_returns(&rs), 60).unwrap();
        let b = forward_tsmom(&from_log_returns(&neg), 60).unwrap();
        for t in 0..=20 {
            let (x, y) = (a.get(t, 0).unwrap(), b.get(t, 0).unwrap());
            assert!((x + y).abs() < 1e-9, "{x} {y}");
        }
    }

    #[test]
    fn depends_only_on_the_forward_window() {
        let cal = SynthCalendar::Days {
            start: NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(),
            days: 200,
        };
        let p = synthesize_panel(3, 2, cal, &RegimeSpec::planted_trends(2)).unwrap();
        let base = forward_tsmom(&p, 20).unwrap();
        // bump the price path from day 100 onward
        let mut cells = Vec::new();
        for t in 0..200 {
            for i in 0..2 {
                let px = p.price(t, i).unwrap();
                cells.push(Some(if t >= 100 && i == 0 {
                    px * if t == 100 { 1.05 } else { 1.0 }
                } else {
                    px
                }));
            }
        }
        let q = PricePanel::new(p.assets().to_vec(), p.dates().to_vec(), cells).unwrap();
        let bumped = forward_tsmom(&q, 20).unwrap();
        for t in 0..180 {
            let changed = base.get(t, 0) != bumped.get(t, 0);
            assert_eq!(changed, (80..=100).contains(&t), "t={t}");
            assert_eq!(base.get(t, 1), bumped.get(t, 1));
        }
    }

    #[test]
    fn recomputation_matches() {
        let cal = SynthCalendar::Days {
            start: NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(),
            days: 200,
        };
        let p = synthesize_panel(8, 1, cal, &RegimeSpec::planted_trends(1)).unwrap();
        let tp = forward_tsmom(&p, 120).unwrap();
        for t in 0..80 {
            let px: Vec<f64> = (t..=t + 120).map(|u| p.price(u, 0).unwrap()).collect();
            let rs: Vec<f64> = px.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
            let mu = rs.iter().sum::<f64>() / 120.0;
            let sd = (rs.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / 120.0).sqrt();
            let expect = ((px[120] / px[0]).ln() / sd).clamp(-10.0, 10.0);
            assert!((tp.get(t, 0).unwrap() - expect).abs() < 1e-12);
        }
    }
}
