//! Expanding-window walk-forward protocol: folds, training with early
//! stopping, grid search and the out-of-sample roll.

use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{simple_returns, PricePanel, ReturnPanel};
use crate::diffcore::{Adam, AdamConfig, Tape};
use crate::error::{Error, Result};
use crate::features::{momentum_features, FeaturePanel};
use crate::losses::{evaluate_loss, total_loss, BatchWindow, LossSettings, LossVariant};
use crate::model::{init_model_in, BatchInput, GridDomains, MmoeConfig, MmoeModel, N_TASKS};
use crate::portfolio::{
    combo_tsmom, mvo_allocation, tsmom_weights, AllocationSeries, ExposurePanel, MvoParams, StrategyReturns,
    TsmomParams, WeightPanel,
};
use crate::targets::{forward_tsmom, TargetPanel, HORIZONS};

/// Strategy labels in reporting order.
pub const STRATEGIES: [&str; 14] = [
    "TSMOM(1)",
    "TSMOM(3)",
    "TSMOM(6)",
    "TSMOM(12)",
    "TSMOM(1,4)",
    "TSMOM(5,8)",
    "TSMOM(9,12)",
    "TSMOM(1,12)",
    "DeepUnifiedMom(Fast)",
    "DeepUnifiedMom(Medium)",
    "DeepUnifiedMom(Slow)",
    "DeepUnifiedMom(CAN)",
    "DeepUnifiedMom(EQWT)",
    "DeepUnifiedMom(MVO)",
];
pub const MODEL_STRATEGIES: std::ops::Range<usize> = 8..14;

const SINGLE_TSMOM: [usize; 4] = [1, 3, 6, 12];
const COMBO_TSMOM: [(usize, usize); 4] = [(1, 4), (5, 8), (9, 12), (1, 12)];

// ----------------------------------------------------------------- folds

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    /// 1-based.
    pub index: usize,
    pub test_year: i32,
    /// Calendar index ranges; `fit` and `validation` together form the
    /// training span.
    pub fit: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl Fold {
    pub fn train_span(&self) -> Range<usize> {
        self.fit.start..self.validation.end
    }
}

/// One fold per calendar year after the first `first_train_years`; the
/// validation set is the chronological tail `val_fraction` of each
/// training span.
pub fn make_folds(dates: &[NaiveDate], first_train_years: u32, val_fraction: f64) -> Result<Vec<Fold>> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {val_fraction} outside (0, 1)"
        )));
    }
    if first_train_years == 0 {
        return Err(Error::InvalidArgument("first_train_years must be positive".into()));
    }
    let (Some(first), Some(last)) = (dates.first(), dates.last()) else {
        return Err(Error::Data("empty calendar".into()));
    };
    let first_test = first.year() + first_train_years as i32;
    if last.year() < first_test {
        return Err(Error::Data(format!(
            "calendar {}..{} is shorter than {} training years plus one test year",
            first.year(),
            last.year(),
            first_train_years
        )));
    }
    let year_start = |y: i32| dates.partition_point(|d| d.year() < y);
    let mut folds = Vec::new();
    for (k, year) in (first_test..=last.year()).enumerate() {
        let (start, end) = (year_start(year), year_start(year + 1));
        if start == end {
            continue;
        }
        let n_val = ((start as f64) * val_fraction).round() as usize;
        let split = start - n_val;
        folds.push(Fold {
            index: k + 1,
            test_year: year,
            fit: 0..split,
            validation: split..start,
            test: start..end,
        });
    }
    Ok(folds)
}

// ------------------------------------------------------------- segments

/// Shared inputs for every fold.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub panel: PricePanel,
    pub features: FeaturePanel,
    pub targets: [TargetPanel; N_TASKS],
    pub simple: ReturnPanel,
}

impl PreparedData {
    pub fn new(panel: &PricePanel) -> Result<Self> {
        let features = momentum_features(panel)?;
        let targets = [
            forward_tsmom(panel, HORIZONS[0])?,
            forward_tsmom(panel, HORIZONS[1])?,
            forward_tsmom(panel, HORIZONS[2])?,
        ];
        Ok(Self {
            panel: panel.clone(),
            features,
            targets,
            simple: simple_returns(panel),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Row {
    asset: usize,
    targets: [f64; N_TASKS],
    next_return: f64,
}

/// Usable training dates of one segment. Targets and next-day returns never
/// reach past the segment's last date.
#[derive(Debug, Clone)]
pub struct SegmentData {
    dates: Vec<usize>,
    rows: Vec<Vec<Row>>,
    sequence_length: usize,
}

impl SegmentData {
    pub fn build(data: &PreparedData, range: Range<usize>, sequence_length: usize) -> SegmentData {
        let horizon = *HORIZONS.iter().max().expect("horizons");
        let mut dates = Vec::new();
        let mut rows = Vec::new();
        for t in range.clone() {
            if t + horizon >= range.end {
                break;
            }
            let mut today = Vec::new();
            for i in 0..data.panel.n_assets() {
                if !data.features.has_sequence(t, i, sequence_length) {
                    continue;
                }
                let targets = [
                    data.targets[0].get(t, i),
                    data.targets[1].get(t, i),
                    data.targets[2].get(t, i),
                ];
                let (Some(a), Some(b), Some(c)) = (targets[0], targets[1], targets[2]) else {
                    continue;
                };
                let Some(next_return) = data.simple.get(t + 1, i) else {
                    continue;
                };
                today.push(Row {
                    asset: i,
                    targets: [a, b, c],
                    next_return,
                });
            }
            if !today.is_empty() {
                dates.push(t);
                rows.push(today);
            }
        }
        SegmentData {
            dates,
            rows,
            sequence_length,
        }
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn dates(&self) -> &[usize] {
        &self.dates
    }

    /// Batch over usable dates `slots`.
    pub fn window(&self, features: &FeaturePanel, slots: Range<usize>) -> Result<BatchWindow> {
        let dates = &self.dates[slots.clone()];
        let rows = &self.rows[slots];
        let input = BatchInput::from_features(features, dates, self.sequence_length, |t, i| {
            dates
                .binary_search(&t)
                .is_ok_and(|k| rows[k].binary_search_by_key(&i, |r| r.asset).is_ok())
        })?;
        let flat: Vec<&Row> = rows.iter().flatten().collect();
        let targets = [0, 1, 2].map(|h| flat.iter().map(|r| r.targets[h]).collect());
        let next = flat.iter().map(|r| r.next_return).collect();
        BatchWindow::new(input, targets, next)
    }
}

// -------------------------------------------------------------- training

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_len: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub loss: LossSettings,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            max_epochs: 20,
            patience: 5,
            batch_len: 126,
            seed: 0,
            adam: AdamConfig::default(),
            loss: LossSettings::default(),
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "need 0 < patience ({}) < max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_len < 2 {
            return Err(Error::Config("batch_len must be at least 2".into()));
        }
        self.loss.cap.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation loss and the number of epochs since it.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: MmoeModel,
    pub best_epoch: usize,
    pub val_loss: f64,
    pub history: Vec<EpochRecord>,
}

/// Mean total loss over consecutive `batch_len` windows; a short remainder
/// joins the last window.
pub fn validation_loss(model: &MmoeModel, features: &FeaturePanel, val: &SegmentData, spec: &TrainSpec) -> Result<f64> {
    let n = val.n_dates();
    if n < 2 {
        return Err(Error::Data("validation segment has fewer than 2 usable dates".into()));
    }
    let chunks = (n / spec.batch_len).max(1);
    let mut total = 0.0;
    for c in 0..chunks {
        let start = c * spec.batch_len;
        let end = if c + 1 == chunks { n } else { start + spec.batch_len };
        total += evaluate_loss(model, &val.window(features, start..end)?, &spec.loss)?;
    }
    Ok(total / chunks as f64)
}

/// One Adam step on `batch`; returns the pre-step loss.
pub fn train_step(model: &mut MmoeModel, adam: &mut Adam, batch: &BatchWindow, loss: &LossSettings) -> Result<f64> {
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, None);
    let lv = total_loss(&mut tape, model, &p, batch, loss)?;
    let value = tape.item(lv.total).unwrap_or(f64::NAN);
    let mut grads = tape.backward(lv.total)?;
    let grads = p
        .vars
        .iter()
        .map(|v| grads.take(*v).expect("every parameter has a gradient"))
        .collect();
    let names = model.names().to_vec();
    adam.step(model.params_mut(), grads, &names)?;
    Ok(value)
}

/// Trains on shuffled contiguous windows and returns the snapshot with the
/// lowest validation loss.
pub fn train_model(
    config: &MmoeConfig,
    domains: &GridDomains,
    features: &FeaturePanel,
    train: &SegmentData,
    val: &SegmentData,
    spec: &TrainSpec,
) -> Result<TrainedModel> {
    spec.validate()?;
    let n = train.n_dates();
    if n < spec.batch_len {
        return Err(Error::Data(format!(
            "training segment has {n} usable dates, fewer than one {}-day window",
            spec.batch_len
        )));
    }
    let mut model = init_model_in(config, domains)?;
    let mut adam = Adam::new(spec.adam, model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ config.seed.rotate_left(17));
    let mut stopper = EarlyStopper::new(spec.patience);
    let mut best = model.clone();
    let mut history = Vec::new();
    let windows = n / spec.batch_len;
    for epoch in 1..=spec.max_epochs {
        let offset = rng.random_range(0..=n - windows * spec.batch_len);
        let mut order: Vec<usize> = (0..windows).collect();
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for w in order {
            let start = offset + w * spec.batch_len;
            let batch = train.window(features, start..start + spec.batch_len)?;
            train_loss += train_step(&mut model, &mut adam, &batch, &spec.loss)?;
        }
        let val_loss = validation_loss(&model, features, val, spec)?;
        let val_loss = if val_loss.is_finite() { val_loss } else { f64::INFINITY };
        history.push(EpochRecord {
            epoch,
            train_loss: train_loss / windows as f64,
            val_loss,
        });
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    let (best_epoch, val_loss) = stopper.best();
    if best_epoch == 0 {
        return Err(Error::Data("validation loss never became finite".into()));
    }
    Ok(TrainedModel {
        model: best,
        best_epoch,
        val_loss,
        history,
    })
}

// ----------------------------------------------------------- grid search

/// `budget` configurations drawn without replacement, in grid order; the
/// whole grid when `full_grid`.
pub fn sample_configs(
    domains: &GridDomains,
    budget: usize,
    full_grid: bool,
    sequence_length: usize,
    seed: u64,
) -> Result<Vec<MmoeConfig>> {
    let all = domains.enumerate(sequence_length, seed);
    if all.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    if full_grid {
        return Ok(all);
    }
    if budget == 0 || budget > all.len() {
        return Err(Error::Config(format!("grid budget {budget} outside 1..={}", all.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, all.len(), budget).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|k| all[k].clone()).collect())
}

#[derive(Debug, Clone)]
pub struct CandidateResult {
    pub config: MmoeConfig,
    pub val_loss: f64,
    pub param_count: usize,
    pub trained: Option<TrainedModel>,
}

/// Lowest validation loss; ties go to fewer parameters, then to the earlier
/// configuration in grid order.
pub fn select_best(candidates: &[CandidateResult]) -> Option<usize> {
    (0..candidates.len()).min_by(|&a, &b| {
        let (x, y) = (&candidates[a], &candidates[b]);
        x.val_loss
            .total_cmp(&y.val_loss)
            .then(x.param_count.cmp(&y.param_count))
            .then(x.config.cmp(&y.config))
    })
}

/// Runs `f` over `0..n` on up to `jobs` threads, keeping results in order.
pub fn parallel_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if jobs <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(n) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= n {
                    break;
                }
                let out = f(k);
                slots.lock().expect("result lock")[k] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|v| v.expect("every job ran"))
        .collect()
}

pub fn grid_search(
    configs: &[MmoeConfig],
    domains: &GridDomains,
    features: &FeaturePanel,
    train: &SegmentData,
    val: &SegmentData,
    spec: &TrainSpec,
    jobs: usize,
) -> Result<(usize, Vec<CandidateResult>)> {
    if configs.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let results = parallel_map(configs.len(), jobs, |k| {
        train_model(&configs[k], domains, features, train, val, spec)
    });
    let mut candidates = Vec::with_capacity(configs.len());
    for (config, res) in configs.iter().zip(results) {
        let trained = res?;
        candidates.push(CandidateResult {
            config: config.clone(),
            val_loss: trained.val_loss,
            param_count: trained.model.param_count(),
            trained: Some(trained),
        });
    }
    let best = select_best(&candidates).expect("non-empty");
    Ok((best, candidates))
}

// -------------------------------------------------------------- backtest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSpec {
    pub first_train_years: u32,
    pub val_fraction: f64,
    pub sequence_length: usize,
    pub grid: GridDomains,
    pub budget: usize,
    pub full_grid: bool,
    pub train: TrainSpec,
    pub cost_rate: f64,
    pub tsmom: TsmomParams,
    pub mvo: MvoParams,
    pub jobs: usize,
}

impl Default for BacktestSpec {
    fn default() -> Self {
        Self {
            first_train_years: 10,
            val_fraction: 0.2,
            sequence_length: 63,
            grid: GridDomains::default(),
            budget: 24,
            full_grid: false,
            train: TrainSpec::default(),
            cost_rate: crate::portfolio::DEFAULT_COST_RATE,
            tsmom: TsmomParams::default(),
            mvo: MvoParams::default(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub test_year: i32,
    pub config: MmoeConfig,
    pub val_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub candidates: usize,
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub variant: LossVariant,
    pub cost_rate: f64,
    /// Net and gross daily returns in [`STRATEGIES`] order.
    pub strategies: Vec<StrategyReturns>,
    /// Asset-level exposures per strategy, same order.
    pub exposures: Vec<ExposurePanel>,
    pub task_weights: Vec<WeightPanel>,
    pub allocations: AllocationSeries,
    pub mvo_allocations: AllocationSeries,
    pub folds: Vec<FoldRecord>,
    pub models: Vec<MmoeModel>,
}

/// Task scores and allocation weights for positions dated in `dates`, each
/// computed from features at the previous calendar date only.
pub fn roll_model(
    model: &MmoeModel,
    features: &FeaturePanel,
    dates: Range<usize>,
    task_weights: &mut [Vec<Option<f64>>],
    alloc: &mut Vec<(usize, [f64; N_TASKS])>,
) -> Result<()> {
    let len = model.config().sequence_length;
    let n = features.n_assets();
    for t in dates {
        if t == 0 {
            continue;
        }
        let u = t - 1;
        if !(0..n).any(|i| features.has_sequence(u, i, len)) {
            continue;
        }
        let input = BatchInput::from_features(features, &[u], len, |_, _| true)?;
        let pred = model.predict(&input)?;
        for (r, &(_, i)) in input.rows().iter().enumerate() {
            for k in 0..N_TASKS {
                task_weights[k][t * n + i] = Some(pred.y[k][r]);
            }
        }
        alloc.push((t, pred.w[0]));
    }
    Ok(())
}

pub fn run_backtest(panel: &PricePanel, spec: &BacktestSpec) -> Result<BacktestReport> {
    let data = PreparedData::new(panel)?;
    run_backtest_prepared(&data, spec)
}

pub fn run_backtest_prepared(data: &PreparedData, spec: &BacktestSpec) -> Result<BacktestReport> {
    spec.train.validate()?;
    if !(spec.cost_rate >= 0.0) {
        return Err(Error::Config(format!("cost rate must be >= 0, got {}", spec.cost_rate)));
    }
    let dates = data.panel.dates();
    let n = data.panel.n_assets();
    let folds = make_folds(dates, spec.first_train_years, spec.val_fraction)?;
    let configs = sample_configs(
        &spec.grid,
        spec.budget,
        spec.full_grid,
        spec.sequence_length,
        spec.train.seed,
    )?;

    let mut task_cells = vec![vec![None; dates.len() * n]; N_TASKS];
    let mut alloc = Vec::new();
    let mut records = Vec::new();
    let mut models = Vec::new();
    let mut oos = vec![false; dates.len()];
    for fold in &folds {
        let wrap = |e: Error| Error::Fold {
            fold: fold.index,
            year: fold.test_year,
            source: Box::new(e),
        };
        let train = SegmentData::build(data, fold.fit.clone(), spec.sequence_length);
        let val = SegmentData::build(data, fold.validation.clone(), spec.sequence_length);
        let (best, candidates) = grid_search(
            &configs,
            &spec.grid,
            &data.features,
            &train,
            &val,
            &spec.train,
            spec.jobs,
        )
        .map_err(wrap)?;
        let winner = candidates[best].trained.as_ref().expect("trained");
        roll_model(
            &winner.model,
            &data.features,
            fold.test.clone(),
            &mut task_cells,
            &mut alloc,
        )
        .map_err(wrap)?;
        for t in fold.test.clone() {
            oos[t] = true;
        }
        records.push(FoldRecord {
            fold: fold.index,
            test_year: fold.test_year,
            config: candidates[best].config.clone(),
            val_loss: winner.val_loss,
            best_epoch: winner.best_epoch,
            epochs_run: winner.history.len(),
            candidates: candidates.len(),
        });
        models.push(winner.model.clone());
    }
    assemble_report(data, spec, task_cells, alloc, &oos, records, models)
}

fn assemble_report(
    data: &PreparedData,
    spec: &BacktestSpec,
    task_cells: Vec<Vec<Option<f64>>>,
    alloc: Vec<(usize, [f64; N_TASKS])>,
    oos: &[bool],
    folds: Vec<FoldRecord>,
    models: Vec<MmoeModel>,
) -> Result<BacktestReport> {
    let dates = data.panel.dates().to_vec();
    let n = data.panel.n_assets();
    let c = spec.cost_rate;
    let mut strategies = Vec::with_capacity(STRATEGIES.len());
    let mut exposures = Vec::with_capacity(STRATEGIES.len());
    let mut push = |label: &str, e: ExposurePanel| -> Result<()> {
        strategies.push(e.returns(label, &data.simple, c)?);
        exposures.push(e);
        Ok(())
    };

    for (j, k) in SINGLE_TSMOM.iter().enumerate() {
        let e = tsmom_weights(&data.panel, *k, &spec.tsmom)?.exposures();
        push(STRATEGIES[j], e.restrict(oos))?;
    }
    for (j, (a, b)) in COMBO_TSMOM.iter().enumerate() {
        let members: Vec<usize> = (*a..=*b).collect();
        let e = combo_tsmom(&members, &data.panel, &spec.tsmom)?;
        push(STRATEGIES[4 + j], e.restrict(oos))?;
    }

    let task_weights = task_cells
        .into_iter()
        .enumerate()
        .map(|(k, cells)| WeightPanel::new(STRATEGIES[8 + k], dates.clone(), n, cells))
        .collect::<Result<Vec<_>>>()?;
    let task_exp: Vec<ExposurePanel> = task_weights.iter().map(WeightPanel::exposures).collect();
    for k in 0..N_TASKS {
        push(STRATEGIES[8 + k], task_exp[k].clone())?;
    }
    let allocations = AllocationSeries {
        dates: alloc.iter().map(|(t, _)| dates[*t]).collect(),
        weights: alloc.iter().map(|(_, w)| *w).collect(),
    };
    let parts = [&task_exp[0], &task_exp[1], &task_exp[2]];
    push(STRATEGIES[11], ExposurePanel::blend(&parts, &allocations)?)?;
    let eq = AllocationSeries::constant(allocations.dates.clone(), [1.0 / 3.0; N_TASKS]);
    push(STRATEGIES[12], ExposurePanel::blend(&parts, &eq)?)?;
    let task_returns = task_exp
        .iter()
        .enumerate()
        .map(|(k, e)| e.returns(STRATEGIES[8 + k], &data.simple, c))
        .collect::<Result<Vec<_>>>()?;
    let mvo_allocations = mvo_allocation(&[&task_returns[0], &task_returns[1], &task_returns[2]], &spec.mvo)?;
    push(STRATEGIES[13], ExposurePanel::blend(&parts, &mvo_allocations)?)?;

    Ok(BacktestReport {
        variant: spec.train.loss.variant,
        cost_rate: c,
        strategies,
        exposures,
        task_weights,
        allocations,
        mvo_allocations,
        folds,
        models,
    })
}
