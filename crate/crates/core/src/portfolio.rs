//! Portfolio arithmetic: task and unified returns, the TSMOM benchmarks,
//! equal-weight and mean-variance blends, and linear transaction costs.
//!
//! Positions dated `t` are held over `(t-1, t]` and may only use information
//! available at `t-1`.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{log_returns, PricePanel, ReturnPanel, DATE_FORMAT};
use crate::diffcore::population_std;
use crate::error::{Error, Result};
use crate::model::N_TASKS;

pub const TRADING_DAYS_PER_MONTH: usize = 21;
pub const ANNUALIZATION: f64 = 252.0;
pub const DEFAULT_COST_RATE: f64 = 0.0003;

/// Per-asset positions in `[-1, 1]`; `None` where the asset is not held.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPanel {
    pub label: String,
    dates: Vec<NaiveDate>,
    n_assets: usize,
    weights: Vec<Option<f64>>,
}

impl WeightPanel {
    pub fn new(
        label: impl Into<String>,
        dates: Vec<NaiveDate>,
        n_assets: usize,
        weights: Vec<Option<f64>>,
    ) -> Result<Self> {
        if weights.len() != dates.len() * n_assets {
            return Err(Error::InvalidArgument("weight panel size mismatch".into()));
        }
        if let Some(w) = weights.iter().flatten().find(|w| !(w.abs() <= 1.0)) {
            return Err(Error::InvalidArgument(format!("asset weight {w} outside [-1, 1]")));
        }
        Ok(Self {
            label: label.into(),
            dates,
            n_assets,
            weights,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn get(&self, t: usize, i: usize) -> Option<f64> {
        self.weights[t * self.n_assets + i]
    }

    /// Number of held assets at `t`.
    pub fn active(&self, t: usize) -> usize {
        self.weights[t * self.n_assets..(t + 1) * self.n_assets]
            .iter()
            .flatten()
            .count()
    }

    /// Asset-level exposures `w / n_t`.
    pub fn exposures(&self) -> ExposurePanel {
        let n = self.n_assets;
        let mut values = vec![0.0; self.weights.len()];
        let mut live = vec![false; self.dates.len()];
        for t in 0..self.dates.len() {
            let n_t = self.active(t);
            if n_t == 0 {
                continue;
            }
            live[t] = true;
            for i in 0..n {
                if let Some(w) = self.get(t, i) {
                    values[t * n + i] = w / n_t as f64;
                }
            }
        }
        ExposurePanel {
            dates: self.dates.clone(),
            n_assets: n,
            values,
            live,
        }
    }
}

/// Fraction of capital in each asset per date; dates with no position are
/// not live.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposurePanel {
    dates: Vec<NaiveDate>,
    n_assets: usize,
    values: Vec<f64>,
    live: Vec<bool>,
}

impl ExposurePanel {
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn is_live(&self, t: usize) -> bool {
        self.live[t]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_assets..(t + 1) * self.n_assets]
    }

    /// Average of several panels on a shared calendar; live where all are.
    pub fn mean(parts: &[&ExposurePanel]) -> Result<ExposurePanel> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty exposure list".into()))?;
        if parts
            .iter()
            .any(|p| p.dates != first.dates || p.n_assets != first.n_assets)
        {
            return Err(Error::InvalidArgument("exposure panels are misaligned".into()));
        }
        let k = parts.len() as f64;
        let values = (0..first.values.len())
            .map(|j| parts.iter().map(|p| p.values[j]).sum::<f64>() / k)
            .collect();
        let live = (0..first.dates.len())
            .map(|t| parts.iter().all(|p| p.live[t]))
            .collect();
        Ok(ExposurePanel {
            dates: first.dates.clone(),
            n_assets: first.n_assets,
            values,
            live,
        })
    }

    /// `sum_k alloc_t[k] * parts[k]` on the dates of `alloc`.
    pub fn blend(parts: &[&ExposurePanel; N_TASKS], alloc: &AllocationSeries) -> Result<ExposurePanel> {
        let first = parts[0];
        if parts
            .iter()
            .any(|p| p.dates != first.dates || p.n_assets != first.n_assets)
        {
            return Err(Error::InvalidArgument("exposure panels are misaligned".into()));
        }
        let n = first.n_assets;
        let mut values = vec![0.0; first.values.len()];
        let mut live = vec![false; first.dates.len()];
        for (d, w) in alloc.dates.iter().zip(&alloc.weights) {
            let t = first
                .dates
                .binary_search(d)
                .map_err(|_| Error::InvalidArgument(format!("allocation date {d} not in calendar")))?;
            live[t] = parts.iter().all(|p| p.live[t]);
            for i in 0..n {
                values[t * n + i] = (0..N_TASKS).map(|k| w[k] * parts[k].values[t * n + i]).sum();
            }
        }
        Ok(ExposurePanel {
            dates: first.dates.clone(),
            n_assets: n,
            values,
            live,
        })
    }

    /// Gross returns `sum_i e_{t,i} r_{t,i}` on live dates, with turnover and
    /// net returns at cost rate `c`. Missing asset returns count as zero.
    pub fn returns(&self, label: &str, returns: &ReturnPanel, c: f64) -> Result<StrategyReturns> {
        if returns.dates() != self.dates.as_slice() || returns.n_assets() != self.n_assets {
            return Err(Error::InvalidArgument("returns and exposures are misaligned".into()));
        }
        let mut out = StrategyReturns::empty(label, c)?;
        for t in 0..self.dates.len() {
            if !self.live[t] {
                continue;
            }
            let gross = self
                .row(t)
                .iter()
                .enumerate()
                .map(|(i, e)| e * returns.get(t, i).unwrap_or(0.0))
                .sum();
            out.push(self.dates[t], gross, self.turnover(t));
        }
        Ok(out)
    }

    /// Copy that is flat and not live wherever `keep` is false, so the first
    /// kept day enters from cash.
    pub fn restrict(&self, keep: &[bool]) -> ExposurePanel {
        let n = self.n_assets;
        let mut out = self.clone();
        for t in 0..self.dates.len() {
            if !keep.get(t).copied().unwrap_or(false) {
                out.live[t] = false;
                out.values[t * n..(t + 1) * n].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        out
    }

    /// `sum_i |e_t - e_{t-1}|`, with the day before the calendar in cash.
    pub fn turnover(&self, t: usize) -> f64 {
        let now = self.row(t);
        if t == 0 {
            return now.iter().map(|e| e.abs()).sum();
        }
        now.iter().zip(self.row(t - 1)).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Daily CAN (or blend) weights over the three task portfolios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSeries {
    pub dates: Vec<NaiveDate>,
    pub weights: Vec<[f64; N_TASKS]>,
}

impl AllocationSeries {
    pub fn constant(dates: Vec<NaiveDate>, w: [f64; N_TASKS]) -> Self {
        let weights = vec![w; dates.len()];
        Self { dates, weights }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dates.len() != self.weights.len() {
            return Err(Error::InvalidArgument("allocation dates and rows differ".into()));
        }
        for (d, w) in self.dates.iter().zip(&self.weights) {
            if w.iter().any(|v| !(*v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("allocation on {d} is off the simplex")));
            }
        }
        Ok(())
    }
}

/// Daily returns of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReturns {
    pub label: String,
    pub cost_rate: f64,
    pub dates: Vec<NaiveDate>,
    pub gross: Vec<f64>,
    pub net: Vec<f64>,
    pub turnover: Vec<f64>,
}

impl StrategyReturns {
    pub fn empty(label: &str, c: f64) -> Result<Self> {
        if !(c >= 0.0) {
            return Err(Error::InvalidArgument(format!("cost rate must be >= 0, got {c}")));
        }
        Ok(Self {
            label: label.to_string(),
            cost_rate: c,
            dates: Vec::new(),
            gross: Vec::new(),
            net: Vec::new(),
            turnover: Vec::new(),
        })
    }

    pub fn push(&mut self, date: NaiveDate, gross: f64, turnover: f64) {
        self.dates.push(date);
        self.gross.push(gross);
        self.turnover.push(turnover);
        self.net.push(gross - self.cost_rate * turnover);
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Appends another series that starts after this one ends.
    pub fn extend(&mut self, other: &StrategyReturns) -> Result<()> {
        if let (Some(a), Some(b)) = (self.dates.last(), other.dates.first()) {
            if b <= a {
                return Err(Error::InvalidArgument("appended series overlaps".into()));
            }
        }
        self.dates.extend_from_slice(&other.dates);
        self.gross.extend_from_slice(&other.gross);
        self.net.extend_from_slice(&other.net);
        self.turnover.extend_from_slice(&other.turnover);
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("date,gross,net,turnover\n");
        for k in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.dates[k].format(DATE_FORMAT),
                self.gross[k],
                self.net[k],
                self.turnover[k]
            ));
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Gross task portfolio returns `(1/n_t) sum_i y_i r_i`; net equals gross.
pub fn task_portfolio_return(weights: &WeightPanel, returns: &ReturnPanel) -> Result<StrategyReturns> {
    weights.exposures().returns(&weights.label, returns, 0.0)
}

/// `sum_k w_k r^k` per date. Calendars must match exactly.
pub fn unified_return(
    label: &str,
    alloc: &AllocationSeries,
    tasks: &[&StrategyReturns; N_TASKS],
) -> Result<StrategyReturns> {
    alloc.validate()?;
    if tasks.iter().any(|t| t.dates != alloc.dates) {
        return Err(Error::InvalidArgument(
            "task returns and allocations are misaligned".into(),
        ));
    }
    let mut out = StrategyReturns::empty(label, 0.0)?;
    for (j, w) in alloc.weights.iter().enumerate() {
        let r = (0..N_TASKS).map(|k| w[k] * tasks[k].gross[j]).sum();
        out.push(alloc.dates[j], r, 0.0);
    }
    Ok(out)
}

pub fn eqwt_combine(label: &str, tasks: &[&StrategyReturns; N_TASKS]) -> Result<StrategyReturns> {
    let alloc = AllocationSeries::constant(tasks[0].dates.clone(), [1.0 / 3.0; N_TASKS]);
    unified_return(label, &alloc, tasks)
}

/// Replaces turnover and net of `gross` using the exposure panel.
pub fn apply_costs(exposure: &ExposurePanel, gross: &StrategyReturns, c: f64) -> Result<StrategyReturns> {
    let mut out = StrategyReturns::empty(&gross.label, c)?;
    for (j, d) in gross.dates.iter().enumerate() {
        let t = exposure
            .dates
            .binary_search(d)
            .map_err(|_| Error::InvalidArgument(format!("return date {d} not in exposure calendar")))?;
        out.push(*d, gross.gross[j], exposure.turnover(t));
    }
    Ok(out)
}

// ----------------------------------------------------------------- TSMOM

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsmomParams {
    pub vol_window: usize,
    /// Annualized volatility target.
    pub sigma_target: f64,
    pub leverage_cap: f64,
}

impl Default for TsmomParams {
    fn default() -> Self {
        Self {
            vol_window: 63,
            sigma_target: 0.15,
            leverage_cap: 1.0,
        }
    }
}

/// Sign of the `k`-month return times `min(sigma_target / sigma_hat, cap)`,
/// observed at `t-1` and dated `t`.
pub fn tsmom_weights(panel: &PricePanel, k: usize, params: &TsmomParams) -> Result<WeightPanel> {
    if !(1..=12).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "TSMOM lookback must be 1..=12 months, got {k}"
        )));
    }
    if params.vol_window < 2
        || !(params.sigma_target > 0.0)
        || !(params.leverage_cap > 0.0 && params.leverage_cap <= 1.0)
    {
        return Err(Error::InvalidArgument("invalid TSMOM parameters".into()));
    }
    let (n_dates, n) = (panel.n_dates(), panel.n_assets());
    let lookback = log_returns(panel, k * TRADING_DAYS_PER_MONTH)?;
    let daily = log_returns(panel, 1)?;
    let mut weights = vec![None; n_dates * n];
    for t in 1..n_dates {
        let u = t - 1;
        if u + 1 < params.vol_window {
            continue;
        }
        for i in 0..n {
            let Some(r) = lookback.get(u, i) else { continue };
            let window: Option<Vec<f64>> = (u + 1 - params.vol_window..=u).map(|s| daily.get(s, i)).collect();
            let Some(window) = window else { continue };
            let sigma = (population_std(&window) * ANNUALIZATION.sqrt()).max(1e-8);
            let sign = if r >= 0.0 { 1.0 } else { -1.0 };
            weights[t * n + i] = Some(sign * (params.sigma_target / sigma).min(params.leverage_cap));
        }
    }
    WeightPanel::new(format!("TSMOM({k})"), panel.dates().to_vec(), n, weights)
}

/// Equal-weight blend of TSMOM strategies; exposures are averaged so the
/// blend's return is the mean of the members' returns.
pub fn combo_tsmom(members: &[usize], panel: &PricePanel, params: &TsmomParams) -> Result<ExposurePanel> {
    if members.is_empty() {
        return Err(Error::InvalidArgument(
            "TSMOM combination needs at least one member".into(),
        ));
    }
    let exposures = members
        .iter()
        .map(|&k| Ok(tsmom_weights(panel, k, params)?.exposures()))
        .collect::<Result<Vec<_>>>()?;
    ExposurePanel::mean(&exposures.iter().collect::<Vec<_>>())
}

// ------------------------------------------------------------------- MVO

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MvoParams {
    pub rebalance_every: usize,
    pub min_history: usize,
    /// Grid steps per unit weight; 100 gives a 0.01 resolution.
    pub resolution: usize,
}

impl Default for MvoParams {
    fn default() -> Self {
        Self {
            rebalance_every: 21,
            min_history: 252,
            resolution: 100,
        }
    }
}

pub const MVO_RIDGE: f64 = 1e-10;

fn is_positive_definite(s: &[[f64; 3]; 3]) -> bool {
    // leading principal minors
    let m1 = s[0][0];
    let m2 = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let m3 = s[0][0] * (s[1][1] * s[2][2] - s[1][2] * s[2][1]) - s[0][1] * (s[1][0] * s[2][2] - s[1][2] * s[2][0])
        + s[0][2] * (s[1][0] * s[2][1] - s[1][1] * s[2][0]);
    m1 > 0.0 && m2 > 0.0 && m3 > 0.0
}

/// Long-only maximum-Sharpe weights by exhaustive search over the simplex
/// grid. Ties within a relative 1e-12 go to the lexicographically smallest
/// point.
pub fn mvo_solve(mu: [f64; 3], sigma: [[f64; 3]; 3], resolution: usize) -> Result<[f64; 3]> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("MVO resolution must be positive".into()));
    }
    if mu.iter().chain(sigma.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite MVO inputs".into()));
    }
    let mut s = sigma;
    if !is_positive_definite(&s) {
        for (k, row) in s.iter_mut().enumerate() {
            row[k] += MVO_RIDGE;
        }
    }
    let step = 1.0 / resolution as f64;
    let mut best = [0.0, 0.0, 1.0];
    let mut best_sr = f64::NEG_INFINITY;
    for i in 0..=resolution {
        for j in 0..=resolution - i {
            let w = [i as f64 * step, j as f64 * step, (resolution - i - j) as f64 * step];
            let ret: f64 = (0..3).map(|a| w[a] * mu[a]).sum();
            let var: f64 = (0..3).map(|a| (0..3).map(|b| w[a] * s[a][b] * w[b]).sum::<f64>()).sum();
            let sr = if var > 0.0 { ret / var.sqrt() } else { f64::NEG_INFINITY };
            let improves = if best_sr.is_finite() {
                sr - best_sr > 1e-12 * best_sr.abs()
            } else {
                sr > best_sr
            };
            if improves {
                best_sr = sr;
                best = w;
            }
        }
    }
    Ok(best)
}

/// Sample mean and population covariance of three aligned series.
pub fn moments(series: &[&[f64]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let n = series[0].len() as f64;
    let mu = series.map(|s| s.iter().sum::<f64>() / n);
    let mut cov = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            cov[a][b] = series[a]
                .iter()
                .zip(series[b])
                .map(|(x, y)| (x - mu[a]) * (y - mu[b]))
                .sum::<f64>()
                / n;
        }
    }
    (mu, cov)
}

/// Expanding-window MVO allocation over the task series' dates. The weights
/// dated at index `j` use task returns strictly before `j`.
pub fn mvo_allocation(tasks: &[&StrategyReturns; N_TASKS], params: &MvoParams) -> Result<AllocationSeries> {
    if params.rebalance_every == 0 {
        return Err(Error::InvalidArgument("MVO rebalance interval must be positive".into()));
    }
    let dates = tasks[0].dates.clone();
    if tasks.iter().any(|t| t.dates != dates) {
        return Err(Error::InvalidArgument("task returns are misaligned".into()));
    }
    let mut current = [1.0 / 3.0; N_TASKS];
    let mut weights = Vec::with_capacity(dates.len());
    for j in 0..dates.len() {
        let due =
            j >= params.min_history.max(2) && (j - params.min_history.max(2)).is_multiple_of(params.rebalance_every);
        if due {
            let (mu, cov) = moments(&[&tasks[0].gross[..j], &tasks[1].gross[..j], &tasks[2].gross[..j]]);
            current = mvo_solve(mu, cov, params.resolution)?;
        }
        weights.push(current);
    }
    Ok(AllocationSeries { dates, weights })
}
