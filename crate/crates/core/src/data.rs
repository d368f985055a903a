//! Continuous-futures price panels: loading, alignment, log returns and a
//! seeded synthetic generator.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssetClass {
    Commodity,
    Currency,
    FixedIncome,
    EquityIndex,
}

impl AssetClass {
    pub const ALL: [AssetClass; 4] = [
        AssetClass::Commodity,
        AssetClass::Currency,
        AssetClass::FixedIncome,
        AssetClass::EquityIndex,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Asset {
    pub id: String,
    /// Not carried by the interchange file; set by the synthetic generator.
    pub class: Option<AssetClass>,
}

/// Back-adjusted settlement prices on a shared trading calendar.
///
/// Cells are stored date-major. Each asset's valid cells form one contiguous
/// run of dates.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    assets: Vec<Asset>,
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
    valid: Vec<bool>,
}

impl PricePanel {
    /// Builds a panel from date-major `prices`; `None` marks a missing cell.
    ///
    /// Interior gaps in an asset's history are filled with the last valid
    /// price so the valid region stays contiguous.
    pub fn new(assets: Vec<Asset>, dates: Vec<NaiveDate>, cells: Vec<Option<f64>>) -> Result<Self> {
        let (n_dates, n_assets) = (dates.len(), assets.len());
        if cells.len() != n_dates * n_assets {
            return Err(Error::Data(format!(
                "{} cells for {n_dates} dates x {n_assets} assets",
                cells.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("calendar must be strictly increasing".into()));
        }
        let ids: BTreeSet<&str> = assets.iter().map(|a| a.id.as_str()).collect();
        if ids.len() != n_assets {
            return Err(Error::Data("duplicate asset identifier".into()));
        }
        let mut prices = vec![f64::NAN; cells.len()];
        let mut valid = vec![false; cells.len()];
        for i in 0..n_assets {
            let present: Vec<usize> = (0..n_dates).filter(|&t| cells[t * n_assets + i].is_some()).collect();
            let (Some(&first), Some(&last)) = (present.first(), present.last()) else {
                continue;
            };
            let mut carry = f64::NAN;
            for t in first..=last {
                if let Some(p) = cells[t * n_assets + i] {
                    if !(p > 0.0 && p.is_finite()) {
                        return Err(Error::Data(format!(
                            "non-positive price {p} for {} on {}",
                            assets[i].id, dates[t]
                        )));
                    }
                    carry = p;
                }
                prices[t * n_assets + i] = carry;
                valid[t * n_assets + i] = true;
            }
        }
        Ok(Self {
            assets,
            dates,
            prices,
            valid,
        })
    }

    pub fn assets(&self) -> &[Asset] {
        &self.assets
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn price(&self, t: usize, i: usize) -> Option<f64> {
        let k = t * self.assets.len() + i;
        self.valid[k].then(|| self.prices[k])
    }

    pub fn is_valid(&self, t: usize, i: usize) -> bool {
        self.valid[t * self.assets.len() + i]
    }

    /// Number of valid prices for asset `i` up to and including date `t`.
    pub fn history_len(&self, t: usize, i: usize) -> usize {
        (0..=t).rev().take_while(|&u| self.is_valid(u, i)).count()
    }

    /// Panel restricted to dates `<= last`.
    pub fn truncate_after(&self, last: NaiveDate) -> PricePanel {
        let keep = self.dates.partition_point(|d| *d <= last);
        let n = self.assets.len();
        PricePanel {
            assets: self.assets.clone(),
            dates: self.dates[..keep].to_vec(),
            prices: self.prices[..keep * n].to_vec(),
            valid: self.valid[..keep * n].to_vec(),
        }
    }

    /// Copy with every price of asset `i` multiplied by `factor`.
    pub fn scale_asset(&self, i: usize, factor: f64) -> PricePanel {
        let mut out = self.clone();
        let n = self.assets.len();
        for t in 0..self.dates.len() {
            out.prices[t * n + i] *= factor;
        }
        out
    }

    /// Index of the first date `>= date`.
    pub fn date_index(&self, date: NaiveDate) -> usize {
        self.dates.partition_point(|d| *d < date)
    }
}

/// Daily or `d`-day returns aligned to a panel's calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    n_assets: usize,
    lookback: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl ReturnPanel {
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn get(&self, t: usize, i: usize) -> Option<f64> {
        let k = t * self.n_assets + i;
        self.valid[k].then(|| self.values[k])
    }
}

fn returns_with(panel: &PricePanel, d: usize, f: impl Fn(f64, f64) -> f64) -> Result<ReturnPanel> {
    if d < 1 {
        return Err(Error::InvalidArgument("return lookback must be >= 1".into()));
    }
    let (n_dates, n) = (panel.n_dates(), panel.n_assets());
    let mut values = vec![f64::NAN; n_dates * n];
    let mut valid = vec![false; n_dates * n];
    for t in d..n_dates {
        for i in 0..n {
            if let (Some(now), Some(then)) = (panel.price(t, i), panel.price(t - d, i)) {
                values[t * n + i] = f(now, then);
                valid[t * n + i] = true;
            }
        }
    }
    Ok(ReturnPanel {
        dates: panel.dates.clone(),
        n_assets: n,
        lookback: d,
        values,
        valid,
    })
}

/// `ln(P_t / P_{t-d})`, valid when both endpoints are valid.
pub fn log_returns(panel: &PricePanel, d: usize) -> Result<ReturnPanel> {
    returns_with(panel, d, |now, then| (now / then).ln())
}

/// One-day simple returns `P_t / P_{t-1} - 1`, used for portfolio arithmetic.
pub fn simple_returns(panel: &PricePanel) -> ReturnPanel {
    returns_with(panel, 1, |now, then| now / then - 1.0).expect("lookback 1 is valid")
}

// ------------------------------------------------------------------ files

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// one file with `date,asset,settle` rows
    Long,
    /// a directory holding one `<asset>.csv` with `date,settle` rows per asset
    PerAsset,
}

fn parse_date(path: &Path, row: usize, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row,
        msg: format!("unparseable date `{s}`: {e}"),
    })
}

fn parse_price(path: &Path, row: usize, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        row,
        msg: format!("unparseable settle `{s}`"),
    })?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row,
            msg: format!("non-positive settle {v}"),
        });
    }
    Ok(v)
}

type Observations = BTreeMap<String, BTreeMap<NaiveDate, f64>>;

fn insert_obs(obs: &mut Observations, path: &Path, row: usize, asset: &str, date: NaiveDate, price: f64) -> Result<()> {
    let series = obs.entry(asset.to_string()).or_default();
    if series.insert(date, price).is_some() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row,
            msg: format!("duplicate entry for {asset} on {date}"),
        });
    }
    Ok(())
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn read_long(path: &Path, obs: &mut Observations) -> Result<()> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            msg: format!("missing column `{name}`"),
        })
    };
    let (cd, ca, cs) = (col("date")?, col("asset")?, col("settle")?);
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let date = parse_date(path, row, field(cd))?;
        let price = parse_price(path, row, field(cs))?;
        let asset = field(ca);
        if asset.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                msg: "empty asset identifier".into(),
            });
        }
        insert_obs(obs, path, row, asset, date, price)?;
    }
    Ok(())
}

fn read_single(path: &Path, asset: &str, obs: &mut Observations) -> Result<()> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str, fallback: usize| headers.iter().position(|h| h == name).unwrap_or(fallback);
    let (cd, cs) = (find("date", 0), find("settle", 1));
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec?;
        let date = parse_date(path, row, rec.get(cd).unwrap_or(""))?;
        let price = parse_price(path, row, rec.get(cs).unwrap_or(""))?;
        insert_obs(obs, path, row, asset, date, price)?;
    }
    Ok(())
}

fn panel_from_obs(obs: Observations) -> Result<PricePanel> {
    let calendar: BTreeSet<NaiveDate> = obs.values().flat_map(|s| s.keys().copied()).collect();
    let dates: Vec<NaiveDate> = calendar.into_iter().collect();
    let assets: Vec<Asset> = obs
        .keys()
        .map(|id| Asset {
            id: id.clone(),
            class: None,
        })
        .collect();
    let mut cells = vec![None; dates.len() * assets.len()];
    for (i, series) in obs.values().enumerate() {
        for (date, &p) in series {
            let t = dates.binary_search(date).expect("date is in the union calendar");
            cells[t * assets.len() + i] = Some(p);
        }
    }
    PricePanel::new(assets, dates, cells)
}

/// Reads a price panel. Assets come out sorted by identifier on the union of
/// all trading dates.
pub fn load_panel(path: impl AsRef<Path>, layout: Layout) -> Result<PricePanel> {
    let path = path.as_ref();
    let mut obs = Observations::new();
    match layout {
        Layout::Long => read_long(path, &mut obs)?,
        Layout::PerAsset => {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            for file in files {
                let asset = file
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default()
                    .to_string();
                read_single(&file, &asset, &mut obs)?;
            }
        }
    }
    if obs.is_empty() {
        return Err(Error::Data(format!("{}: no observations", path.display())));
    }
    panel_from_obs(obs)
}

/// Writes the canonical long format (`date,asset,settle`), one row per valid
/// cell, date-major.
pub fn write_panel(panel: &PricePanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("date,asset,settle\n");
    for (t, date) in panel.dates.iter().enumerate() {
        for (i, asset) in panel.assets.iter().enumerate() {
            if let Some(p) = panel.price(t, i) {
                out.push_str(&format!("{},{},{}\n", date.format(DATE_FORMAT), asset.id, p));
            }
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

// -------------------------------------------------------------- synthetic

/// One regime of a geometric random walk, in per-day log terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub drift: f64,
    pub vol: f64,
    pub days: usize,
}

/// Per-asset regime lists. Asset `i` uses entry `i % len`; each asset cycles
/// through its segments until the calendar is exhausted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub per_asset: Vec<Vec<Segment>>,
}

impl RegimeSpec {
    pub fn uniform(drift: f64, vol: f64) -> Self {
        Self {
            per_asset: vec![vec![Segment {
                drift,
                vol,
                days: usize::MAX,
            }]],
        }
    }

    /// Persistent per-asset trends: alternating signs, three drift magnitudes
    /// and four volatility levels.
    pub fn planted_trends(n_assets: usize) -> Self {
        let per_asset = (0..n_assets)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let vol = 0.008 * (1.0 + 0.25 * (i % 4) as f64);
                // drift of 0.08 to 0.12 daily vols
                let drift = sign * vol * (0.08 + 0.02 * (i % 3) as f64);
                vec![Segment {
                    drift,
                    vol,
                    days: usize::MAX,
                }]
            })
            .collect();
        Self { per_asset }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthCalendar {
    /// Every weekday from 1 January of `start_year` to 31 December of the
    /// last year.
    Years { start_year: i32, years: u32 },
    /// `days` consecutive weekdays starting at `start` (or the next weekday).
    Days { start: NaiveDate, days: usize },
}

pub fn business_days(start: NaiveDate, end_inclusive: NaiveDate) -> Vec<NaiveDate> {
    start
        .iter_days()
        .take_while(|d| *d <= end_inclusive)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

impl SynthCalendar {
    pub fn dates(&self) -> Result<Vec<NaiveDate>> {
        match *self {
            SynthCalendar::Years { start_year, years } => {
                if years == 0 {
                    return Err(Error::InvalidArgument("zero synthetic years".into()));
                }
                let start = NaiveDate::from_ymd_opt(start_year, 1, 1)
                    .ok_or_else(|| Error::InvalidArgument(format!("year {start_year}")))?;
                let end = NaiveDate::from_ymd_opt(start_year + years as i32 - 1, 12, 31)
                    .ok_or_else(|| Error::InvalidArgument(format!("{years} years")))?;
                Ok(business_days(start, end))
            }
            SynthCalendar::Days { start, days } => Ok(start
                .iter_days()
                .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
                .take(days)
                .collect()),
        }
    }
}

pub const SYNTH_START_PRICE: f64 = 100.0;

/// Seeded geometric random walk per asset:
/// `ln P_{t+1} = ln P_t + drift + vol * z`, `z ~ N(0, 1)`.
pub fn synthesize_panel(
    seed: u64,
    n_assets: usize,
    calendar: SynthCalendar,
    regimes: &RegimeSpec,
) -> Result<PricePanel> {
    if n_assets == 0 {
        return Err(Error::InvalidArgument("zero synthetic assets".into()));
    }
    if regimes.per_asset.is_empty() || regimes.per_asset.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidArgument("empty regime list".into()));
    }
    for seg in regimes.per_asset.iter().flatten() {
        if !(seg.vol >= 0.0) || !seg.drift.is_finite() || !seg.vol.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "regime volatility must be non-negative, got {}",
                seg.vol
            )));
        }
        if seg.days == 0 {
            return Err(Error::InvalidArgument("zero-length regime".into()));
        }
    }
    let dates = calendar.dates()?;
    let width = (n_assets.saturating_sub(1)).to_string().len().max(2);
    let assets: Vec<Asset> = (0..n_assets)
        .map(|i| Asset {
            id: format!("SYN{i:0width$}"),
            class: Some(AssetClass::ALL[i % 4]),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = vec![None; dates.len() * n_assets];
    for i in 0..n_assets {
        let segments = &regimes.per_asset[i % regimes.per_asset.len()];
        let (mut seg_idx, mut left) = (0, segments[0].days);
        let mut p = SYNTH_START_PRICE;
        for t in 0..dates.len() {
            if t > 0 {
                if left == 0 {
                    seg_idx = (seg_idx + 1) % segments.len();
                    left = segments[seg_idx].days;
                }
                let seg = segments[seg_idx];
                let z: f64 = StandardNormal.sample(&mut rng);
                p *= (seg.drift + seg.vol * z).exp();
                left -= 1;
            }
            cells[t * n_assets + i] = Some(p);
        }
    }
    PricePanel::new(assets, dates, cells)
}
