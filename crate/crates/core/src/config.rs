//! Run configuration file (TOML). Unknown keys are rejected and every
//! numeric field is range-checked.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestSpec, TrainSpec};
use crate::diffcore::AdamConfig;
use crate::error::{Error, Result};
use crate::losses::{CapForm, LossSettings, LossVariant, SoftCapParams};
use crate::model::GridDomains;
use crate::portfolio::{MvoParams, TsmomParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub loss: LossVariant,
    pub tau: f64,
    pub cap_form: CapForm,
    pub first_train_years: u32,
    pub val_fraction: f64,
    pub sequence_length: usize,
    pub budget: usize,
    pub full_grid: bool,
    pub batch_len: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub cost_rate: f64,
    pub sigma_target: f64,
    pub vol_window: usize,
    pub leverage_cap: f64,
    pub mvo_rebalance: usize,
    pub mvo_min_history: usize,
    pub jobs: usize,
    pub grid: GridDomains,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = BacktestSpec::default();
        Self {
            seed: 0,
            loss: LossVariant::Softcap,
            tau: SoftCapParams::default().tau,
            cap_form: CapForm::Printed,
            first_train_years: spec.first_train_years,
            val_fraction: spec.val_fraction,
            sequence_length: spec.sequence_length,
            budget: spec.budget,
            full_grid: false,
            batch_len: spec.train.batch_len,
            max_epochs: spec.train.max_epochs,
            patience: spec.train.patience,
            learning_rate: AdamConfig::default().lr,
            clip_norm: AdamConfig::default().clip_norm.unwrap_or(5.0),
            cost_rate: spec.cost_rate,
            sigma_target: spec.tsmom.sigma_target,
            vol_window: spec.tsmom.vol_window,
            leverage_cap: spec.tsmom.leverage_cap,
            mvo_rebalance: spec.mvo.rebalance_every,
            mvo_min_history: spec.mvo.min_history,
            jobs: 1,
            grid: GridDomains::default(),
        }
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(what.to_string()))
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.tau > 0.0 && self.tau <= 1.0, "tau must be in (0, 1]")?;
        check(
            (1..=100).contains(&self.first_train_years),
            "first_train_years must be in 1..=100",
        )?;
        check(
            self.val_fraction > 0.0 && self.val_fraction < 1.0,
            "val_fraction must be in (0, 1)",
        )?;
        check(
            (1..=252).contains(&self.sequence_length),
            "sequence_length must be in 1..=252",
        )?;
        check(self.budget >= 1, "budget must be at least 1")?;
        check((2..=2520).contains(&self.batch_len), "batch_len must be in 2..=2520")?;
        check((1..=1000).contains(&self.max_epochs), "max_epochs must be in 1..=1000")?;
        check(
            self.patience >= 1 && self.patience < self.max_epochs,
            "patience must be in 1..max_epochs",
        )?;
        check(
            self.learning_rate > 0.0 && self.learning_rate <= 1.0,
            "learning_rate must be in (0, 1]",
        )?;
        check(
            self.clip_norm > 0.0 && self.clip_norm.is_finite(),
            "clip_norm must be positive",
        )?;
        check((0.0..=0.1).contains(&self.cost_rate), "cost_rate must be in [0, 0.1]")?;
        check(
            self.sigma_target > 0.0 && self.sigma_target <= 2.0,
            "sigma_target must be in (0, 2]",
        )?;
        check((2..=1000).contains(&self.vol_window), "vol_window must be in 2..=1000")?;
        check(
            self.leverage_cap > 0.0 && self.leverage_cap <= 1.0,
            "leverage_cap must be in (0, 1]",
        )?;
        check(self.mvo_rebalance >= 1, "mvo_rebalance must be at least 1")?;
        check(self.mvo_min_history >= 2, "mvo_min_history must be at least 2")?;
        check((1..=256).contains(&self.jobs), "jobs must be in 1..=256")?;
        for (name, dom) in [
            ("lstm_layers", &self.grid.lstm_layers),
            ("lstm_hidden", &self.grid.lstm_hidden),
            ("n_experts", &self.grid.n_experts),
            ("task_layers", &self.grid.task_layers),
            ("task_hidden", &self.grid.task_hidden),
        ] {
            check(
                !dom.is_empty() && dom.iter().all(|v| *v >= 1),
                &format!("grid.{name} needs positive values"),
            )?;
        }
        check(
            self.grid.task_layers.iter().all(|v| *v >= 2),
            "grid.task_layers values must be at least 2",
        )?;
        if !self.full_grid {
            check(self.budget <= self.grid.size(), "budget exceeds the grid size")?;
        }
        Ok(())
    }

    /// Backtest settings for loss `variant`.
    pub fn spec(&self, variant: LossVariant) -> BacktestSpec {
        BacktestSpec {
            first_train_years: self.first_train_years,
            val_fraction: self.val_fraction,
            sequence_length: self.sequence_length,
            grid: self.grid.clone(),
            budget: self.budget,
            full_grid: self.full_grid,
            train: TrainSpec {
                max_epochs: self.max_epochs,
                patience: self.patience,
                batch_len: self.batch_len,
                seed: self.seed,
                adam: AdamConfig {
                    lr: self.learning_rate,
                    clip_norm: Some(self.clip_norm),
                    ..AdamConfig::default()
                },
                loss: LossSettings {
                    variant,
                    cap: self.cap(),
                },
            },
            cost_rate: self.cost_rate,
            tsmom: TsmomParams {
                vol_window: self.vol_window,
                sigma_target: self.sigma_target,
                leverage_cap: self.leverage_cap,
            },
            mvo: MvoParams {
                rebalance_every: self.mvo_rebalance,
                min_history: self.mvo_min_history,
                ..MvoParams::default()
            },
            jobs: self.jobs,
        }
    }

    pub fn cap(&self) -> SoftCapParams {
        SoftCapParams {
            tau: self.tau,
            form: self.cap_form,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_match_spec_defaults() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.spec(LossVariant::Softcap), BacktestSpec::default());
    }

    #[test]
    fn partial_file_overrides_defaults() {
        let c: RunConfig = toml::from_str("seed = 9\ncost_rate = 0.0\n[grid]\nlstm_layers = [1]\nlstm_hidden = [8]\nn_experts = [2]\ntask_layers = [2]\ntask_hidden = [4]\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.cost_rate, 0.0);
        assert_eq!(c.grid.size(), 1);
        assert!(c.validate().is_err(), "budget 24 exceeds a one-point grid");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1\n").is_err());
        assert!(toml::from_str::<RunConfig>("[grid]\nwidth = [1]\n").is_err());
    }

    #[test]
    fn ranges_are_enforced() {
        for bad in [
            RunConfig {
                tau: 0.0,
                ..Default::default()
            },
            RunConfig {
                cost_rate: -0.1,
                ..Default::default()
            },
            RunConfig {
                patience: 20,
                ..Default::default()
            },
            RunConfig {
                val_fraction: 1.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn serialized_defaults_parse_back() {
        let text = toml::to_string(&RunConfig::default()).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), RunConfig::default());
    }
}
