//! Persisted backtest runs and the CSV report built from them.
//!
//! A run directory holds `runs/<variant>/run.json` plus per-strategy return
//! files. [`emit_report`] rebuilds every report file from the saved runs, so
//! re-emitting is byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestReport, FoldRecord, MODEL_STRATEGIES, STRATEGIES};
use crate::data::DATE_FORMAT;
use crate::error::{Error, Result};
use crate::losses::{LossVariant, SoftCapParams};
use crate::metrics::{cumulative_pct, summarize, MetricSummary};
use crate::portfolio::{AllocationSeries, StrategyReturns};

pub const RUN_VERSION: u32 = 1;

const SUMMARY_HEADER: [&str; 6] = [
    "Portfolios",
    "Ann. Return (%)",
    "Ann. vol (%)",
    "Sharpe",
    "Sortino",
    "Max DD (%)",
];

/// Everything the report needs from one backtest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: u32,
    pub variant: LossVariant,
    pub cap: SoftCapParams,
    pub cost_rate: f64,
    pub strategies: Vec<StrategyReturns>,
    pub allocations: AllocationSeries,
    pub mvo_allocations: AllocationSeries,
    pub folds: Vec<FoldRecord>,
}

impl RunRecord {
    pub fn from_report(report: &BacktestReport, cap: SoftCapParams) -> Self {
        Self {
            version: RUN_VERSION,
            variant: report.variant,
            cap,
            cost_rate: report.cost_rate,
            strategies: report.strategies.clone(),
            allocations: report.allocations.clone(),
            mvo_allocations: report.mvo_allocations.clone(),
            folds: report.folds.clone(),
        }
    }

    pub fn strategy(&self, label: &str) -> Option<&StrategyReturns> {
        self.strategies.iter().find(|s| s.label == label)
    }
}

/// File-name form of a strategy label: `TSMOM(1,4)` becomes `tsmom_1_4`.
pub fn slug(label: &str) -> String {
    let mut out = String::new();
    for ch in label.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if !out.is_empty() && !out.ends_with('_') {
            out.push('_');
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

pub fn run_dir(out: &Path, variant: LossVariant) -> PathBuf {
    out.join("runs").join(variant.label())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `run.json`, per-strategy returns, allocations and fold records.
pub fn save_run(out: &Path, run: &RunRecord) -> Result<PathBuf> {
    let dir = run_dir(out, run.variant);
    create_dir(&dir)?;
    let json = serde_json::to_string_pretty(run).map_err(|e| Error::Checkpoint(e.to_string()))?;
    write_file(&dir.join("run.json"), &json)?;
    for s in &run.strategies {
        s.write_csv(dir.join(format!("returns_{}.csv", slug(&s.label))))?;
    }
    write_file(&dir.join("allocations.csv"), &allocation_csv(&run.allocations))?;
    write_file(&dir.join("mvo_allocations.csv"), &allocation_csv(&run.mvo_allocations))?;
    let mut folds = String::from("fold,test_year,n_experts,lstm_layers,lstm_hidden,task_layers,task_hidden,val_loss,best_epoch,epochs_run,candidates\n");
    for f in &run.folds {
        let c = &f.config;
        folds.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            f.fold,
            f.test_year,
            c.n_experts,
            c.lstm_layers,
            c.lstm_hidden,
            c.task_layers,
            c.task_hidden,
            f.val_loss,
            f.best_epoch,
            f.epochs_run,
            f.candidates
        ));
    }
    write_file(&dir.join("folds.csv"), &folds)?;
    Ok(dir)
}

/// `None` when the variant was never run.
pub fn load_run(out: &Path, variant: LossVariant) -> Result<Option<RunRecord>> {
    let path = run_dir(out, variant).join("run.json");
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let run: RunRecord =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if run.version != RUN_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported run version {}",
            path.display(),
            run.version
        )));
    }
    Ok(Some(run))
}

fn allocation_csv(a: &AllocationSeries) -> String {
    let mut out = String::from("date,w_fast,w_med,w_slow\n");
    for (d, w) in a.dates.iter().zip(&a.weights) {
        out.push_str(&format!("{},{},{},{}\n", d.format(DATE_FORMAT), w[0], w[1], w[2]));
    }
    out
}

fn metric_cells(m: &MetricSummary) -> [String; 5] {
    [m.ann_return_pct, m.ann_vol_pct, m.sharpe, m.sortino, m.max_dd_pct].map(|v| format!("{v:.2}"))
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

/// Net-return summaries in reporting order.
pub fn summarize_run(run: &RunRecord, labels: &[&str]) -> Result<Vec<MetricSummary>> {
    labels
        .iter()
        .map(|label| {
            let s = run
                .strategy(label)
                .ok_or_else(|| Error::Data(format!("run has no strategy {label}")))?;
            summarize(label, &s.net)
        })
        .collect()
}

/// Title of a loss variant's block in `ablation.csv`.
pub fn ablation_block(run: &RunRecord) -> String {
    match run.variant {
        LossVariant::Softcap => format!("Sharpe Ratio with Soft Capping Mechanism (Threshold = {})", run.cap.tau),
        LossVariant::Sharpe => "Sharpe Ratio".to_string(),
    }
}

/// Files written by [`emit_report`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportFiles {
    pub summary: PathBuf,
    pub cumulative: Vec<PathBuf>,
    pub allocations: PathBuf,
    pub ablation: Option<PathBuf>,
}

/// Builds `summary.csv`, `cumret_<strategy>.csv` and `allocations.csv` from
/// the soft-capped run (the plain-Sharpe run when it is the only one), and
/// `ablation.csv` when both runs exist.
pub fn emit_report(out: &Path) -> Result<ReportFiles> {
    let soft = load_run(out, LossVariant::Softcap)?;
    let plain = load_run(out, LossVariant::Sharpe)?;
    let main = soft
        .as_ref()
        .or(plain.as_ref())
        .ok_or_else(|| Error::Data(format!("no saved runs under {}", out.join("runs").display())))?;

    let rows = summarize_run(main, &STRATEGIES)?
        .iter()
        .map(|m| {
            let mut r = vec![m.label.clone()];
            r.extend(metric_cells(m));
            r
        })
        .collect::<Vec<_>>();
    let summary = out.join("summary.csv");
    write_file(&summary, &csv_text(&SUMMARY_HEADER, &rows)?)?;

    let mut cumulative = Vec::new();
    for label in STRATEGIES {
        let s = main.strategy(label).expect("summarized above");
        let mut text = String::from("date,cumulative_pct\n");
        for (d, c) in s.dates.iter().zip(cumulative_pct(&s.net)) {
            text.push_str(&format!("{},{}\n", d.format(DATE_FORMAT), c));
        }
        let path = out.join(format!("cumret_{}.csv", slug(label)));
        write_file(&path, &text)?;
        cumulative.push(path);
    }

    let allocations = out.join("allocations.csv");
    write_file(&allocations, &allocation_csv(&main.allocations))?;

    let ablation = match (&soft, &plain) {
        (Some(a), Some(b)) => {
            let mut rows = Vec::new();
            for run in [a, b] {
                let block = ablation_block(run);
                for m in summarize_run(run, &STRATEGIES[MODEL_STRATEGIES])? {
                    let mut r = vec![block.clone(), m.label.clone()];
                    r.extend(metric_cells(&m));
                    rows.push(r);
                }
            }
            let mut header = vec!["Loss"];
            header.extend(SUMMARY_HEADER);
            let path = out.join("ablation.csv");
            write_file(&path, &csv_text(&header, &rows)?)?;
            Some(path)
        }
        _ => None,
    };

    Ok(ReportFiles {
        summary,
        cumulative,
        allocations,
        ablation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn slugs() {
        assert_eq!(slug("TSMOM(1,4)"), "tsmom_1_4");
        assert_eq!(slug("DeepUnifiedMom(Fast)"), "deepunifiedmom_fast");
        assert_eq!(slug("TSMOM(12)"), "tsmom_12");
    }

    fn fake_run(variant: LossVariant, seed: u64) -> RunRecord {
        let dates: Vec<NaiveDate> = (0..40)
            .map(|k| NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(k))
            .collect();
        let strategies = STRATEGIES
            .iter()
            .enumerate()
            .map(|(j, label)| {
                let mut s = StrategyReturns::empty(label, 0.0003).unwrap();
                for (k, d) in dates.iter().enumerate() {
                    let x = ((k as u64 * 7919 + j as u64 * 104_729 + seed) % 1000) as f64 / 1000.0 - 0.45;
                    s.push(*d, 0.01 * x, 0.1);
                }
                s
            })
            .collect();
        let w = |k: usize| {
            let a = (k % 5) as f64 / 10.0;
            [a, 0.3, 0.7 - a]
        };
        RunRecord {
            version: RUN_VERSION,
            variant,
            cap: SoftCapParams::default(),
            cost_rate: 0.0003,
            strategies,
            allocations: AllocationSeries {
                dates: dates.clone(),
                weights: (0..dates.len()).map(w).collect(),
            },
            mvo_allocations: AllocationSeries::constant(dates, [0.2, 0.3, 0.5]),
            folds: Vec::new(),
        }
    }

    #[test]
    fn emits_all_files_and_is_repeatable() {
        let dir = tempfile::tempdir().unwrap();
        let soft = fake_run(LossVariant::Softcap, 1);
        save_run(dir.path(), &soft).unwrap();
        let files = emit_report(dir.path()).unwrap();
        assert!(files.ablation.is_none());
        save_run(dir.path(), &fake_run(LossVariant::Sharpe, 2)).unwrap();
        let files = emit_report(dir.path()).unwrap();
        let summary = fs::read_to_string(&files.summary).unwrap();
        assert_eq!(summary.lines().count(), 15);
        assert!(summary.contains("\"TSMOM(1,4)\","));
        let ablation = fs::read_to_string(files.ablation.as_ref().unwrap()).unwrap();
        assert_eq!(ablation.lines().count(), 13);
        assert!(ablation.lines().nth(1).unwrap().contains("Threshold = 0.01"));
        assert!(ablation.lines().nth(7).unwrap().starts_with("Sharpe Ratio,"));

        let before: Vec<Vec<u8>> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_file())
            .map(|p| fs::read(p).unwrap())
            .collect();
        emit_report(dir.path()).unwrap();
        let after: Vec<Vec<u8>> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_file())
            .map(|p| fs::read(p).unwrap())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn run_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let run = fake_run(LossVariant::Softcap, 3);
        save_run(dir.path(), &run).unwrap();
        assert_eq!(load_run(dir.path(), LossVariant::Softcap).unwrap(), Some(run));
        assert_eq!(load_run(dir.path(), LossVariant::Sharpe).unwrap(), None);
    }

    #[test]
    fn cumulative_and_allocation_files() {
        let dir = tempfile::tempdir().unwrap();
        let run = fake_run(LossVariant::Softcap, 4);
        save_run(dir.path(), &run).unwrap();
        let files = emit_report(dir.path()).unwrap();
        let can = run.strategy("DeepUnifiedMom(CAN)").unwrap();
        let text = fs::read_to_string(dir.path().join("cumret_deepunifiedmom_can.csv")).unwrap();
        let last: f64 = text.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
        let expect = (can.net.iter().map(|r| 1.0 + r).product::<f64>() - 1.0) * 100.0;
        assert!((last / 100.0 - expect / 100.0).abs() < 1e-10);
        for line in fs::read_to_string(&files.allocations).unwrap().lines().skip(1) {
            let s: f64 = line.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_runs_are_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(dir.path()).is_err());
    }
}
