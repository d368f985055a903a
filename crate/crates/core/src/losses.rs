//! Training objectives: per-date RMSE, batch Sharpe, soft-capped Sharpe and
//! their sum.

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{finite_diff_check, population_std, GradCheck, Tape, Tensor, Var, DEFAULT_FD_STEP};
use crate::error::{Error, Result};
use crate::features::N_FEATURES;
use crate::model::{init_model_unchecked, BatchInput, BoundParams, ForwardVars, MmoeConfig, MmoeModel, N_TASKS};

pub const SHARPE_STD_FLOOR: f64 = 1e-8;
pub const DEFAULT_TAU: f64 = 0.01;

/// First term of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LossVariant {
    /// soft-capped Sharpe ratio
    Softcap,
    /// plain negative Sharpe ratio
    Sharpe,
}

impl LossVariant {
    pub fn label(self) -> &'static str {
        match self {
            LossVariant::Softcap => "softcap",
            LossVariant::Sharpe => "sharpe",
        }
    }
}

/// Lower-branch form of the soft cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CapForm {
    /// `L_e = min(SR - tau, 0)`
    Printed,
    /// `L_e = min(SR + tau, 0)`, continuous slope of 1 inside `[-tau, tau]`
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftCapParams {
    pub tau: f64,
    pub form: CapForm,
}

impl Default for SoftCapParams {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            form: CapForm::Printed,
        }
    }
}

impl SoftCapParams {
    pub fn validate(&self) -> Result<()> {
        if self.tau > 0.0 && self.tau.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "tau must be positive, got {}",
                self.tau
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSettings {
    pub variant: LossVariant,
    pub cap: SoftCapParams,
}

impl Default for LossSettings {
    fn default() -> Self {
        Self {
            variant: LossVariant::Softcap,
            cap: SoftCapParams::default(),
        }
    }
}

/// Soft-capped loss as a function of the Sharpe ratio alone.
pub fn soft_cap_of_sr(sr: f64, cap: SoftCapParams) -> f64 {
    let tau = cap.tau;
    let u = sr.min(tau);
    let u_e = (sr - tau).max(0.0);
    let l = u.max(-tau);
    let l_e = match cap.form {
        CapForm::Printed => (sr - tau).min(0.0),
        CapForm::Symmetric => (sr + tau).min(0.0),
    };
    -(l + (1.0 + u_e).ln() - (1.0 - l_e).ln())
}

fn sharpe_ratio(returns: &[f64]) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "Sharpe loss needs at least 2 returns, got {}",
            returns.len()
        )));
    }
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    Ok(mean / population_std(returns).max(SHARPE_STD_FLOOR))
}

/// `-mean / std` of per-period returns, population std floored at 1e-8.
pub fn sharpe_loss(returns: &[f64]) -> Result<f64> {
    Ok(-sharpe_ratio(returns)?)
}

pub fn soft_capped_sharpe(returns: &[f64], cap: SoftCapParams) -> Result<f64> {
    cap.validate()?;
    Ok(soft_cap_of_sr(sharpe_ratio(returns)?, cap))
}

/// Mean over dates of the per-date RMSE across that date's assets.
pub fn rmse_loss(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::InvalidArgument("prediction and target dates differ".into()));
    }
    let mut total = 0.0;
    let mut dates = 0;
    for (p, t) in pred.iter().zip(target) {
        if p.len() != t.len() {
            return Err(Error::InvalidArgument("prediction and target widths differ".into()));
        }
        if p.is_empty() {
            continue;
        }
        let mse = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        total += mse.sqrt();
        dates += 1;
    }
    if dates == 0 {
        return Err(Error::InvalidArgument("RMSE over zero valid pairs".into()));
    }
    Ok(total / dates as f64)
}

// ------------------------------------------------------------- on a tape

/// Sharpe ratio of a `T x 1` (or `[T]`) return column.
pub fn sharpe_ratio_on_tape(tape: &mut Tape, returns: Var) -> Result<Var> {
    let n = tape.value(returns).numel();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "Sharpe loss needs at least 2 returns, got {n}"
        )));
    }
    let mean = tape.mean(returns)?;
    let sd = tape.std(returns)?;
    let sd = tape.max_scalar(sd, SHARPE_STD_FLOOR)?;
    Ok(tape.div(mean, sd)?)
}

pub fn sharpe_loss_on_tape(tape: &mut Tape, returns: Var) -> Result<Var> {
    let sr = sharpe_ratio_on_tape(tape, returns)?;
    Ok(tape.neg(sr)?)
}

/// Soft cap applied to a scalar Sharpe ratio node.
pub fn soft_cap_on_tape(tape: &mut Tape, sr: Var, cap: SoftCapParams) -> Result<Var> {
    cap.validate()?;
    let tau = cap.tau;
    let u = tape.min_scalar(sr, tau)?;
    let shifted = tape.add_scalar(sr, -tau)?;
    let u_e = tape.max_scalar(shifted, 0.0)?;
    let l = tape.max_scalar(u, -tau)?;
    let l_e = match cap.form {
        CapForm::Printed => tape.min_scalar(shifted, 0.0)?,
        CapForm::Symmetric => {
            let up = tape.add_scalar(sr, tau)?;
            tape.min_scalar(up, 0.0)?
        }
    };
    let one_plus_ue = tape.add_scalar(u_e, 1.0)?;
    let upper = tape.ln(one_plus_ue)?;
    let one_minus_le = tape.rsub_scalar(1.0, l_e)?;
    let lower = tape.ln(one_minus_le)?;
    let s = tape.add(l, upper)?;
    let s = tape.sub(s, lower)?;
    Ok(tape.neg(s)?)
}

pub fn soft_capped_sharpe_on_tape(tape: &mut Tape, returns: Var, cap: SoftCapParams) -> Result<Var> {
    let sr = sharpe_ratio_on_tape(tape, returns)?;
    soft_cap_on_tape(tape, sr, cap)
}

/// Per-date RMSE averaged over dates; `mean_matrix` averages rows per date.
pub fn rmse_on_tape(tape: &mut Tape, pred: Var, target: Var, mean_matrix: Var) -> Result<Var> {
    let diff = tape.sub(pred, target)?;
    let sq = tape.square(diff)?;
    let per_date = tape.matmul(mean_matrix, sq)?;
    let rmse = tape.sqrt(per_date)?;
    Ok(tape.mean(rmse)?)
}

/// Contiguous training window: model inputs, targets for each horizon and
/// next-day simple returns, all per row of `input`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchWindow {
    pub input: BatchInput,
    pub targets: [Tensor; N_TASKS],
    pub next_returns: Tensor,
}

impl BatchWindow {
    pub fn new(input: BatchInput, targets: [Vec<f64>; N_TASKS], next_returns: Vec<f64>) -> Result<Self> {
        let n = input.n_rows();
        if targets.iter().any(|t| t.len() != n) || next_returns.len() != n {
            return Err(Error::InvalidArgument("batch columns must match input rows".into()));
        }
        if targets.iter().flatten().chain(&next_returns).any(|v| !v.is_finite()) {
            return Err(Error::Data("batch contains a non-finite target or return".into()));
        }
        let col = |v: Vec<f64>| Tensor::matrix(n, 1, v);
        let [a, b, c] = targets;
        Ok(Self {
            input,
            targets: [col(a)?, col(b)?, col(c)?],
            next_returns: col(next_returns)?,
        })
    }
}

/// Graph nodes produced by [`total_loss`].
#[derive(Debug, Clone)]
pub struct LossVars {
    pub total: Var,
    pub sharpe_term: Var,
    pub rmse: [Var; N_TASKS],
    /// Per-date unified portfolio returns, `dates x 1`.
    pub unified: Var,
    pub forward: ForwardVars,
}

/// Sharpe term on the unified portfolio plus the three RMSE terms.
pub fn total_loss(
    tape: &mut Tape,
    model: &MmoeModel,
    params: &BoundParams,
    batch: &BatchWindow,
    settings: &LossSettings,
) -> Result<LossVars> {
    let fwd = model.forward(tape, params, &batch.input)?;
    let g = fwd.mean_matrix;
    let r = tape.constant(batch.next_returns.clone());
    let mut task_returns = Vec::with_capacity(N_TASKS);
    let mut rmse = Vec::with_capacity(N_TASKS);
    for k in 0..N_TASKS {
        let pnl = tape.mul(fwd.y[k], r)?;
        task_returns.push(tape.matmul(g, pnl)?);
        let target = tape.constant(batch.targets[k].clone());
        rmse.push(rmse_on_tape(tape, fwd.y[k], target, g)?);
    }
    let stacked = tape.concat_cols(&task_returns)?;
    let weighted = tape.mul(stacked, fwd.w)?;
    let ones = tape.constant(Tensor::full(&[N_TASKS, 1], 1.0));
    let unified = tape.matmul(weighted, ones)?;
    let sharpe_term = match settings.variant {
        LossVariant::Softcap => soft_capped_sharpe_on_tape(tape, unified, settings.cap)?,
        LossVariant::Sharpe => sharpe_loss_on_tape(tape, unified)?,
    };
    let mut total = sharpe_term;
    for &term in &rmse {
        total = tape.add(total, term)?;
    }
    Ok(LossVars {
        total,
        sharpe_term,
        rmse: [rmse[0], rmse[1], rmse[2]],
        unified,
        forward: fwd,
    })
}

/// Loss value without gradient bookkeeping.
pub fn evaluate_loss(model: &MmoeModel, batch: &BatchWindow, settings: &LossSettings) -> Result<f64> {
    let mut tape = Tape::new();
    let p = model.bind_constants(&mut tape);
    let lv = total_loss(&mut tape, model, &p, batch, settings)?;
    tape.item(lv.total)
        .ok_or_else(|| Error::InvalidArgument("total loss is not a scalar".into()))
}

/// Random inputs, targets and returns for `dates x assets` rows.
pub fn toy_batch(seed: u64, dates: usize, assets: usize, len: usize) -> Result<BatchWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs: Vec<Vec<Vec<f64>>> = (0..dates)
        .map(|_| {
            (0..assets)
                .map(|_| (0..len * N_FEATURES).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect()
        })
        .collect();
    let input = BatchInput::from_sequences(&seqs, len)?;
    let n = input.n_rows();
    let targets = [(); 3].map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect());
    let rets = (0..n).map(|_| rng.random_range(-0.03..0.03)).collect();
    BatchWindow::new(input, targets, rets)
}

/// Two experts, hidden width 8.
pub fn toy_config(len: usize) -> MmoeConfig {
    MmoeConfig {
        n_experts: 2,
        lstm_layers: 1,
        lstm_hidden: 8,
        task_layers: 2,
        task_hidden: 8,
        sequence_length: len,
        seed: 17,
    }
}

/// Gradient check of the total loss on a toy model (2 experts, hidden 8,
/// 4 assets, sequence 10, 30-date window).
pub fn toy_gradcheck(seed: u64, settings: &LossSettings) -> Result<GradCheck> {
    let model = init_model_unchecked(&MmoeConfig { seed, ..toy_config(10) })?;
    let batch = toy_batch(seed, 30, 4, 10)?;
    finite_diff_check(
        |tape, vars| -> Result<Var> {
            let p = BoundParams { vars: vars.to_vec() };
            Ok(total_loss(tape, &model, &p, &batch, settings)?.total)
        },
        model.params(),
        DEFAULT_FD_STEP,
    )
}
