//! Volatility-normalized momentum features over seven lookbacks.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::data::{log_returns, PricePanel, ReturnPanel, DATE_FORMAT};
use crate::diffcore::population_std;
use crate::error::{Error, Result};

pub const LOOKBACKS: [usize; 7] = [3, 5, 10, 21, 63, 126, 252];
pub const N_FEATURES: usize = LOOKBACKS.len();
pub const VOL_FLOOR: f64 = 1e-8;
pub const FEATURE_CLIP: f64 = 5.0;
/// Valid prices needed at and before `t` for every lookback to exist.
pub const MIN_HISTORY: usize = 253;

/// Trailing population std of daily log returns.
#[derive(Debug, Clone, PartialEq)]
pub struct VolEstimate {
    window: usize,
    n_assets: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl VolEstimate {
    pub fn window(&self) -> usize {
        self.window
    }

    /// Floored volatility at `(t, i)`.
    pub fn get(&self, t: usize, i: usize) -> Option<f64> {
        let k = t * self.n_assets + i;
        self.valid[k].then(|| self.values[k])
    }
}

fn window_returns(returns: &ReturnPanel, t: usize, i: usize, window: usize) -> Option<Vec<f64>> {
    if t + 1 < window {
        return None;
    }
    (t + 1 - window..=t).map(|u| returns.get(u, i)).collect()
}

/// Population std of the last `window` one-day returns ending at `t`,
/// floored at [`VOL_FLOOR`].
pub fn trailing_vol(returns: &ReturnPanel, window: usize) -> Result<VolEstimate> {
    if window < 3 {
        return Err(Error::InvalidArgument(format!(
            "volatility window must be >= 3, got {window}"
        )));
    }
    if returns.lookback() != 1 {
        return Err(Error::InvalidArgument("trailing_vol expects one-day returns".into()));
    }
    let (n_dates, n) = (returns.dates().len(), returns.n_assets());
    let mut values = vec![f64::NAN; n_dates * n];
    let mut valid = vec![false; n_dates * n];
    for t in 0..n_dates {
        for i in 0..n {
            if let Some(w) = window_returns(returns, t, i, window) {
                values[t * n + i] = population_std(&w).max(VOL_FLOOR);
                valid[t * n + i] = true;
            }
        }
    }
    Ok(VolEstimate {
        window,
        n_assets: n,
        values,
        valid,
    })
}

/// Per (date, asset) feature vectors ordered by [`LOOKBACKS`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePanel {
    dates: Vec<NaiveDate>,
    asset_ids: Vec<String>,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl FeaturePanel {
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn is_valid(&self, t: usize, i: usize) -> bool {
        self.valid[t * self.asset_ids.len() + i]
    }

    pub fn get(&self, t: usize, i: usize) -> Option<&[f64; N_FEATURES]> {
        let k = t * self.asset_ids.len() + i;
        if !self.valid[k] {
            return None;
        }
        let row = &self.values[k * N_FEATURES..(k + 1) * N_FEATURES];
        Some(row.try_into().expect("row has N_FEATURES values"))
    }

    /// Whether rows `t + 1 - len ..= t` are all valid for asset `i`.
    pub fn has_sequence(&self, t: usize, i: usize, len: usize) -> bool {
        len >= 1 && t + 1 >= len && self.is_valid(t + 1 - len, i) && self.is_valid(t, i)
    }

    /// Writes `date,asset,f3,...,f252` rows for valid cells.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("date,asset");
        for d in LOOKBACKS {
            out.push_str(&format!(",f{d}"));
        }
        out.push('\n');
        for (t, date) in self.dates.iter().enumerate() {
            for (i, id) in self.asset_ids.iter().enumerate() {
                if let Some(row) = self.get(t, i) {
                    out.push_str(&format!("{},{id}", date.format(DATE_FORMAT)));
                    for v in row {
                        out.push_str(&format!(",{v}"));
                    }
                    out.push('\n');
                }
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// `r_{t-d,t} / (sigma_d * sqrt(d))` clipped to `[-5, 5]` for each lookback.
///
/// Cells with fewer than [`MIN_HISTORY`] valid prices are masked.
pub fn momentum_features(panel: &PricePanel) -> Result<FeaturePanel> {
    let (n_dates, n) = (panel.n_dates(), panel.n_assets());
    if (0..n).all(|i| n_dates == 0 || panel.history_len(n_dates - 1, i) < MIN_HISTORY) {
        return Err(Error::Data(format!(
            "no asset has the {MIN_HISTORY} valid prices needed for features"
        )));
    }
    let daily = log_returns(panel, 1)?;
    let mut values = vec![f64::NAN; n_dates * n * N_FEATURES];
    let mut valid = vec![false; n_dates * n];
    for (f, &d) in LOOKBACKS.iter().enumerate() {
        let ret = log_returns(panel, d)?;
        let vol = trailing_vol(&daily, d)?;
        let scale = (d as f64).sqrt();
        for t in 0..n_dates {
            for i in 0..n {
                if let (Some(r), Some(s)) = (ret.get(t, i), vol.get(t, i)) {
                    values[(t * n + i) * N_FEATURES + f] = (r / (s * scale)).clamp(-FEATURE_CLIP, FEATURE_CLIP);
                }
            }
        }
    }
    for t in 0..n_dates {
        for i in 0..n {
            valid[t * n + i] = panel.history_len(t, i) >= MIN_HISTORY;
        }
    }
    Ok(FeaturePanel {
        dates: panel.dates().to_vec(),
        asset_ids: panel.assets().iter().map(|a| a.id.clone()).collect(),
        values,
        valid,
    })
}
