//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! `UNIMOM_ACCEPT_ONLY=1,2,6` restricts the run to the listed criteria.

use std::collections::BTreeSet;
use std::fs;
use std::time::Instant;

use chrono::Datelike;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unimom::backtest::{make_folds, run_backtest_prepared, BacktestSpec, PreparedData, TrainSpec, STRATEGIES};
use unimom::data::{synthesize_panel, PricePanel, RegimeSpec, SynthCalendar};
use unimom::diffcore::{Tape, Tensor};
use unimom::losses::{
    soft_cap_of_sr, soft_cap_on_tape, toy_gradcheck, CapForm, LossSettings, LossVariant, SoftCapParams,
};
use unimom::metrics::summarize;
use unimom::model::GridDomains;
use unimom::portfolio::{mvo_solve, tsmom_weights, TsmomParams};
use unimom::report::{emit_report, save_run, RunRecord};

type Check = (usize, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ----------------------------------------------------------------- 1

fn gradient_fidelity() -> Outcome {
    let t0 = Instant::now();
    let check = toy_gradcheck(0, &LossSettings::default()).expect("gradient check runs");
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        check.max_rel_error < 1e-4 && secs < 60.0,
        format!(
            "max relative error {:.3e} over {} entries (< 1e-4), {:.1} s (< 60 s)",
            check.max_rel_error, check.entries_checked, secs
        ),
    )
}

// ----------------------------------------------------------------- 2

/// Region-by-region evaluation of the soft-capped loss, written without
/// min/max.
fn soft_cap_by_region(sr: f64, tau: f64) -> f64 {
    if sr >= tau {
        -(tau + (1.0 + (sr - tau)).ln())
    } else if sr >= -tau {
        -(sr - (1.0 - (sr - tau)).ln())
    } else {
        -(-tau - (1.0 - (sr - tau)).ln())
    }
}

fn soft_cap_values() -> Outcome {
    let cap = SoftCapParams::default();
    let cases = [(0.01, -0.01), (1.0, -0.69813), (-1.0, 0.70813), (0.0, 0.00995)];
    let mut worst: f64 = 0.0;
    let mut oracle_gap: f64 = 0.0;
    for (sr, expect) in cases {
        let got = soft_cap_of_sr(sr, cap);
        worst = worst.max((got - expect).abs());
        oracle_gap = oracle_gap.max((got - soft_cap_by_region(sr, cap.tau)).abs());
    }
    let exact = soft_cap_of_sr(0.01, cap) == -0.01;
    outcome(
        worst <= 1e-5 && oracle_gap < 1e-15 && exact,
        format!("max deviation from stated values {worst:.2e} (<= 1e-5), max gap to region oracle {oracle_gap:.1e}, loss(0.01) = -0.01 exactly: {exact}"),
    )
}

// ----------------------------------------------------------------- 3

/// Analytic d loss / d SR at `sr`, read off the tape.
fn slope(sr: f64, cap: SoftCapParams) -> f64 {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(sr));
    let loss = soft_cap_on_tape(&mut tape, x, cap).unwrap();
    let grads = tape.backward(loss).unwrap();
    grads.get(x).unwrap().data()[0]
}

/// Max |slope| over the grid, its location, the max away from the kinks at
/// +-tau, and whether the loss is non-increasing.
fn slope_profile(cap: SoftCapParams) -> (f64, f64, f64, bool) {
    let (mut max_slope, mut at, mut smooth_max) = (0.0f64, 0.0, 0.0f64);
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for k in -300..=300 {
        let sr = k as f64 * 0.01;
        let s = slope(sr, cap).abs();
        if s > max_slope {
            max_slope = s;
            at = sr;
        }
        if (sr.abs() - cap.tau).abs() > 1e-12 {
            smooth_max = smooth_max.max(s);
        }
        let v = soft_cap_of_sr(sr, cap);
        monotone &= v <= prev;
        prev = v;
    }
    (max_slope, at, smooth_max, monotone)
}

fn capping_property() -> Outcome {
    let (max_slope, at, smooth, monotone) = slope_profile(SoftCapParams::default());
    let (_, _, sym_smooth, sym_mono) = slope_profile(SoftCapParams {
        form: CapForm::Symmetric,
        ..SoftCapParams::default()
    });
    outcome(
        max_slope <= 1.0 + 1e-9 && monotone,
        format!(
            "max |dL/dSR| {max_slope:.5} at SR = {at:.2} (bound 1 + 1e-9), {smooth:.5} away from the kinks at +-tau, \
             monotone non-increasing: {monotone}. The loss as defined has slope -1 - 1/(1 + tau - SR) on (-tau, tau); \
             the symmetric lower branch would give {sym_smooth:.5} away from the kinks (monotone: {sym_mono}) but moves loss(SR=0) off 0.00995"
        ),
    )
}

// ----------------------------------------------------------------- 4

fn sharpe(w: [f64; 3], mu: [f64; 3], s: [[f64; 3]; 3]) -> f64 {
    let m: f64 = (0..3).map(|i| w[i] * mu[i]).sum();
    let v: f64 = (0..3).map(|i| (0..3).map(|j| w[i] * s[i][j] * w[j]).sum::<f64>()).sum();
    m / v.sqrt()
}

fn mvo_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let t0 = Instant::now();
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    for _ in 0..5 {
        let mu = [(); 3].map(|_| rng.random_range(-0.0005..0.001));
        let a: [[f64; 3]; 3] = [(); 3].map(|_| [(); 3].map(|_| rng.random_range(-0.01..0.01)));
        let mut s = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] = (0..3).map(|k| a[i][k] * a[j][k]).sum::<f64>() + if i == j { 1e-6 } else { 0.0 };
            }
        }
        let w = mvo_solve(mu, s, 100).expect("mvo");
        let mut best = f64::NEG_INFINITY;
        for i in 0..=1000 {
            for j in 0..=1000 - i {
                let x = [i as f64 / 1000.0, j as f64 / 1000.0, (1000 - i - j) as f64 / 1000.0];
                best = best.max(sharpe(x, mu, s));
            }
        }
        worst_gap = worst_gap.max(best - sharpe(w, mu, s));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst_gap <= 1e-3 && secs < 5.0,
        format!("worst Sharpe gap to 0.001 brute force {worst_gap:.2e} (<= 1e-3), {secs:.2} s (< 5 s)"),
    )
}

// ----------------------------------------------------------------- 5

fn tiny_spec() -> BacktestSpec {
    BacktestSpec {
        first_train_years: 4,
        sequence_length: 5,
        grid: GridDomains {
            lstm_layers: vec![1],
            lstm_hidden: vec![4],
            n_experts: vec![2],
            task_layers: vec![2],
            task_hidden: vec![4, 6],
        },
        budget: 2,
        train: TrainSpec {
            max_epochs: 3,
            patience: 2,
            batch_len: 63,
            ..TrainSpec::default()
        },
        ..BacktestSpec::default()
    }
}

fn tiny_panel() -> PricePanel {
    synthesize_panel(
        5,
        4,
        SynthCalendar::Years {
            start_year: 2000,
            years: 5,
        },
        &RegimeSpec::planted_trends(4),
    )
    .expect("synthetic panel")
}

fn causality() -> Outcome {
    let panel = tiny_panel();
    let n = panel.n_assets();
    let full_data = PreparedData::new(&panel).unwrap();
    let full = run_backtest_prepared(&full_data, &tiny_spec()).unwrap();
    let test_start = make_folds(panel.dates(), 4, 0.2).unwrap()[0].test.start;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cuts: Vec<usize> = (0..3)
        .map(|_| rng.random_range(test_start..panel.n_dates() - 1))
        .collect();
    let mut mismatches = Vec::new();
    let mut compared = 0usize;
    for &t in &cuts {
        let short = panel.truncate_after(panel.dates()[t]);
        // TSMOM signals straight from the weight builder
        for k in [1, 3, 6, 12] {
            let a = tsmom_weights(&panel, k, &TsmomParams::default()).unwrap();
            let b = tsmom_weights(&short, k, &TsmomParams::default()).unwrap();
            for s in 0..=t {
                for i in 0..n {
                    compared += 1;
                    if a.get(s, i).map(f64::to_bits) != b.get(s, i).map(f64::to_bits) {
                        mismatches.push(format!("TSMOM({k}) weight at {s},{i} (cut {t})"));
                    }
                }
            }
        }
        let data = PreparedData::new(&short).unwrap();
        let cut = run_backtest_prepared(&data, &tiny_spec()).unwrap();
        for (j, label) in STRATEGIES.iter().enumerate() {
            let (a, b) = (&full.exposures[j], &cut.exposures[j]);
            for s in 0..=t {
                compared += n;
                let same = a.is_live(s) == b.is_live(s)
                    && a.row(s).iter().zip(b.row(s)).all(|(x, y)| x.to_bits() == y.to_bits());
                if !same {
                    mismatches.push(format!("{label} position at {s} (cut {t})"));
                }
            }
        }
        for k in 0..3 {
            for s in 0..=t {
                for i in 0..n {
                    compared += 1;
                    if full.task_weights[k].get(s, i).map(f64::to_bits)
                        != cut.task_weights[k].get(s, i).map(f64::to_bits)
                    {
                        mismatches.push(format!("task {k} score at {s},{i} (cut {t})"));
                    }
                }
            }
        }
    }
    let dates: Vec<String> = cuts.iter().map(|&t| panel.dates()[t].to_string()).collect();
    outcome(
        mismatches.is_empty(),
        format!(
            "{} strategies, cuts at {}, {compared} values compared, {} mismatches{}",
            STRATEGIES.len(),
            dates.join(", "),
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

// ----------------------------------------------------------------- 6

fn fold_schedule() -> Outcome {
    let dates = SynthCalendar::Years {
        start_year: 1990,
        years: 34,
    }
    .dates()
    .unwrap();
    let folds = make_folds(&dates, 10, 0.2).unwrap();
    let years: Vec<i32> = folds.iter().map(|f| f.test_year).collect();
    let ok = folds.len() == 24 && years == (2000..=2023).collect::<Vec<_>>();
    let nested = folds.windows(2).all(|w| w[0].train_span().end < w[1].train_span().end);
    let first_train = dates[folds[0].train_span().start].year()..=dates[folds[0].train_span().end - 1].year();
    outcome(
        ok && nested && first_train == (1990..=1999),
        format!(
            "{} folds, test years {}..{}, first training span {}..{}, spans nested: {nested}",
            folds.len(),
            years.first().unwrap(),
            years.last().unwrap(),
            first_train.start(),
            first_train.end()
        ),
    )
}

// ------------------------------------------------------------------ 7, 8

struct PlantedRuns {
    soft_secs: f64,
    sharpe_secs: f64,
    can_sharpe: [f64; 2],
    dir: tempfile::TempDir,
}

fn planted_spec(variant: LossVariant) -> BacktestSpec {
    BacktestSpec {
        first_train_years: 14,
        sequence_length: 10,
        grid: GridDomains {
            lstm_layers: vec![1],
            lstm_hidden: vec![64],
            n_experts: vec![3],
            task_layers: vec![2, 3],
            task_hidden: vec![64, 126],
        },
        budget: 4,
        train: TrainSpec {
            max_epochs: 3,
            patience: 2,
            seed: 1,
            loss: LossSettings {
                variant,
                ..LossSettings::default()
            },
            ..TrainSpec::default()
        },
        ..BacktestSpec::default()
    }
}

fn planted_runs() -> PlantedRuns {
    let panel = synthesize_panel(
        11,
        12,
        SynthCalendar::Years {
            start_year: 2000,
            years: 16,
        },
        &RegimeSpec::planted_trends(12),
    )
    .unwrap();
    let data = PreparedData::new(&panel).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut secs = [0.0; 2];
    let mut can = [0.0; 2];
    for (k, variant) in [LossVariant::Softcap, LossVariant::Sharpe].into_iter().enumerate() {
        let t0 = Instant::now();
        let report = run_backtest_prepared(&data, &planted_spec(variant)).expect("planted backtest");
        secs[k] = t0.elapsed().as_secs_f64();
        let run = RunRecord::from_report(&report, SoftCapParams::default());
        can[k] = summarize("can", &run.strategy("DeepUnifiedMom(CAN)").unwrap().net)
            .unwrap()
            .sharpe;
        save_run(dir.path(), &run).unwrap();
    }
    PlantedRuns {
        soft_secs: secs[0],
        sharpe_secs: secs[1],
        can_sharpe: can,
        dir,
    }
}

fn planted_trend(runs: &PlantedRuns) -> Outcome {
    let baseline = summarize("zero", &[0.0; 504]).unwrap().sharpe;
    let sr = runs.can_sharpe[0];
    outcome(
        sr > 0.0 && sr > baseline && runs.soft_secs < 1800.0,
        format!(
            "CAN net Sharpe {sr:.3} (> 0 and > zero-weight baseline {baseline:.1}), 2 folds, budget 4, 3 epochs max, {:.0} s (< 1800 s)",
            runs.soft_secs
        ),
    )
}

fn ablation_shape(runs: &PlantedRuns) -> Outcome {
    let files = emit_report(runs.dir.path()).unwrap();
    let Some(path) = files.ablation else {
        return outcome(false, "ablation.csv was not written");
    };
    let text = fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let soft = lines
        .iter()
        .filter(|l| l.starts_with("Sharpe Ratio with Soft Capping Mechanism (Threshold = 0.01)"))
        .count();
    let plain = lines.iter().filter(|l| l.starts_with("Sharpe Ratio,")).count();
    outcome(
        lines.len() == 13 && soft == 6 && plain == 6,
        format!(
            "both variants completed (softcap {:.0} s, sharpe {:.0} s); blocks of {soft} and {plain} rows; CAN Sharpe softcap {:.3}, sharpe {:.3}",
            runs.soft_secs, runs.sharpe_secs, runs.can_sharpe[0], runs.can_sharpe[1]
        ),
    )
}

// ----------------------------------------------------------------- 9

fn cost_accounting() -> Outcome {
    let data = PreparedData::new(&tiny_panel()).unwrap();
    let report = run_backtest_prepared(&data, &tiny_spec()).unwrap();
    let mut violations = 0;
    let mut mismatched = 0;
    let mut days = 0;
    for (s, e) in report.strategies.iter().zip(&report.exposures) {
        violations += s.net.iter().zip(&s.gross).filter(|(n, g)| n > g).count();
        let free = e.returns(&s.label, &data.simple, 0.0).unwrap();
        mismatched += free
            .net
            .iter()
            .zip(&free.gross)
            .zip(&s.gross)
            .filter(|((n, g), g0)| n.to_bits() != g.to_bits() || g.to_bits() != g0.to_bits())
            .count();
        days += s.len();
    }
    outcome(
        violations == 0 && mismatched == 0 && report.cost_rate == 0.0003,
        format!(
            "{days} strategy-days: net > gross on {violations} at c = 0.0003; net != gross on {mismatched} at c = 0"
        ),
    )
}

// ----------------------------------------------------------------- 10

fn metrics_oracle() -> Outcome {
    let m = summarize("s", &[0.02, -0.01, 0.03, -0.02]).unwrap();
    let d = summarize("d", &[0.1, -0.1, 1.2 / 0.99 - 1.0]).unwrap();
    let sortino_ok = (m.daily_sortino - 0.4472).abs() < 5e-5;
    let dd_ok = (d.max_dd_pct / 100.0 + 0.10).abs() < 5e-5;

    let data = PreparedData::new(&tiny_panel()).unwrap();
    let report = run_backtest_prepared(&data, &tiny_spec()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_run(dir.path(), &RunRecord::from_report(&report, SoftCapParams::default())).unwrap();
    let files = emit_report(dir.path()).unwrap();
    let text = fs::read_to_string(&files.allocations).unwrap();
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let s: f64 = line.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
        worst = worst.max((s - 1.0).abs());
        rows += 1;
    }
    outcome(
        sortino_ok && dd_ok && worst <= 1e-9 && rows > 0,
        format!(
            "daily Sortino {:.4}, MaxDD {:.4}, {rows} allocation rows with worst |sum - 1| {worst:.1e}",
            m.daily_sortino,
            d.max_dd_pct / 100.0
        ),
    )
}

fn main() {
    let only: Option<BTreeSet<usize>> = std::env::var("UNIMOM_ACCEPT_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |k: usize| only.as_ref().is_none_or(|s| s.contains(&k));
    let mut failed = 0;
    let mut report = |k: usize, name: &str, o: Outcome| {
        println!(
            "CRITERION {k:>2} {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    };
    let checks: [Check; 8] = [
        (1, "gradient fidelity", gradient_fidelity),
        (2, "soft-cap values", soft_cap_values),
        (3, "capping property", capping_property),
        (4, "MVO oracle", mvo_oracle),
        (5, "causality", causality),
        (6, "fold schedule", fold_schedule),
        (9, "cost accounting", cost_accounting),
        (10, "metrics oracle", metrics_oracle),
    ];
    for (k, name, f) in checks {
        if wanted(k) {
            report(k, name, f());
        }
    }
    if wanted(7) || wanted(8) {
        let runs = planted_runs();
        if wanted(7) {
            report(7, "planted-trend end-to-end", planted_trend(&runs));
        }
        if wanted(8) {
            report(8, "ablation shape", ablation_shape(&runs));
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
