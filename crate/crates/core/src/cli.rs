//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::backtest::{run_backtest_prepared, PreparedData};
use crate::config::RunConfig;
use crate::data::{load_panel, synthesize_panel, write_panel, Layout, RegimeSpec, SynthCalendar};
use crate::error::{Error, Result};
use crate::features::momentum_features;
use crate::losses::{toy_gradcheck, LossSettings, LossVariant};
use crate::report::{emit_report, run_dir, save_run, RunRecord};
use crate::targets::{forward_tsmom, write_targets};

#[derive(Debug, Parser)]
#[command(name = "unimom", version, about = "Multi-task deep momentum portfolios")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Regime {
    /// alternating up and down drifts per asset
    Planted,
    /// zero drift, 1% daily vol
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossChoice {
    Softcap,
    Sharpe,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize raw settlement prices into a long-format panel file.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "long")]
        layout: Layout,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic price panel.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        assets: usize,
        #[arg(long, default_value_t = 15)]
        years: u32,
        #[arg(long, default_value_t = 1990)]
        start_year: i32,
        #[arg(long, value_enum, default_value = "planted")]
        regime: Regime,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the seven normalized momentum features per date and asset.
    Features {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, value_enum, default_value = "long")]
        layout: Layout,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write forward volatility-scaled returns over one horizon.
    Targets {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, value_enum, default_value = "long")]
        layout: Layout,
        #[arg(long, value_parser = ["20", "60", "120"])]
        horizon: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Walk-forward training and out-of-sample evaluation.
    Backtest {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, value_enum, default_value = "long")]
        layout: Layout,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Search every grid point instead of a sampled subset.
        #[arg(long)]
        full_grid: bool,
        #[arg(long, value_enum)]
        loss: Option<LossChoice>,
        #[arg(long, env = "UNIMOM_JOBS")]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rebuild the report files from saved runs.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Finite-difference check of the training loss on a toy model.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn say(line: impl AsRef<str>) {
    println!("{}", line.as_ref());
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, layout, out } => {
            let panel = load_panel(&input, layout)?;
            write_panel(&panel, &out)?;
            say(format!(
                "{} assets x {} dates -> {}",
                panel.n_assets(),
                panel.n_dates(),
                out.display()
            ));
        }
        Command::Synth {
            seed,
            assets,
            years,
            start_year,
            regime,
            out,
        } => {
            if assets == 0 || years == 0 {
                return Err(Error::InvalidArgument("need at least one asset and one year".into()));
            }
            let regimes = match regime {
                Regime::Planted => RegimeSpec::planted_trends(assets),
                Regime::Flat => RegimeSpec::uniform(0.0, 0.01),
            };
            let panel = synthesize_panel(seed, assets, SynthCalendar::Years { start_year, years }, &regimes)?;
            write_panel(&panel, &out)?;
            say(format!(
                "{} assets x {} dates -> {}",
                assets,
                panel.n_dates(),
                out.display()
            ));
        }
        Command::Features { panel, layout, out } => {
            let panel = load_panel(&panel, layout)?;
            momentum_features(&panel)?.write_csv(&out)?;
            say(format!("features -> {}", out.display()));
        }
        Command::Targets {
            panel,
            layout,
            horizon,
            out,
        } => {
            let panel = load_panel(&panel, layout)?;
            let h: usize = horizon.parse().expect("validated by clap");
            write_targets(&panel, &forward_tsmom(&panel, h)?, &out)?;
            say(format!("targets({h}) -> {}", out.display()));
        }
        Command::Backtest {
            panel,
            layout,
            config,
            out,
            full_grid,
            loss,
            jobs,
            seed,
        } => {
            let mut cfg = match &config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::default(),
            };
            cfg.full_grid |= full_grid;
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let variants = match loss {
                Some(LossChoice::Softcap) => vec![LossVariant::Softcap],
                Some(LossChoice::Sharpe) => vec![LossVariant::Sharpe],
                Some(LossChoice::Both) => vec![LossVariant::Softcap, LossVariant::Sharpe],
                None => vec![cfg.loss],
            };
            let panel = load_panel(&panel, layout)?;
            backtest(&panel, &cfg, &variants, &out)?;
        }
        Command::Report { input } => {
            let files = emit_report(&input)?;
            say(format!("summary -> {}", files.summary.display()));
            if let Some(a) = files.ablation {
                say(format!("ablation -> {}", a.display()));
            }
        }
        Command::Gradcheck { seed } => {
            let mut worst: f64 = 0.0;
            for variant in [LossVariant::Softcap, LossVariant::Sharpe] {
                let check = toy_gradcheck(
                    seed,
                    &LossSettings {
                        variant,
                        ..LossSettings::default()
                    },
                )?;
                say(format!(
                    "{}: max relative error {:.3e} over {} entries",
                    variant.label(),
                    check.max_rel_error,
                    check.entries_checked
                ));
                worst = worst.max(check.max_rel_error);
            }
            say(format!("max relative error {worst:.3e}"));
            if !(worst < 1e-4) {
                return Err(Error::Data(format!("gradient check failed: {worst:.3e} >= 1e-4")));
            }
        }
    }
    Ok(())
}

fn backtest(panel: &crate::data::PricePanel, cfg: &RunConfig, variants: &[LossVariant], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let resolved = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, resolved).map_err(|e| Error::io(&cfg_path, e))?;
    let data = PreparedData::new(panel)?;
    for &variant in variants {
        let spec = cfg.spec(variant);
        let report = run_backtest_prepared(&data, &spec)?;
        let dir = save_run(out, &RunRecord::from_report(&report, cfg.cap()))?;
        let models = run_dir(out, variant).join("models");
        std::fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
        for (fold, model) in report.folds.iter().zip(&report.models) {
            model.save(models.join(format!("fold_{:02}_{}.json", fold.fold, fold.test_year)))?;
        }
        say(format!(
            "{}: {} folds -> {}",
            variant.label(),
            report.folds.len(),
            dir.display()
        ));
    }
    let files = emit_report(out)?;
    say(format!("summary -> {}", files.summary.display()));
    Ok(())
}
