//! C ABI over `unimom`.
//!
//! Every function returns a [`UnimomStatus`]. Objects are opaque handles
//! created by `*_load`/`*_synthesize` and released by the matching `*_free`.
//! After a failure, [`unimom_last_error`] copies a message for the calling
//! thread. Panics never cross the boundary; they surface as
//! `UNIMOM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use unimom::config::RunConfig;
use unimom::data::{load_panel, synthesize_panel, Layout, PricePanel, RegimeSpec, SynthCalendar};
use unimom::losses::{soft_cap_of_sr, CapForm, LossVariant, SoftCapParams};
use unimom::metrics::summarize;
use unimom::model::MmoeModel;
use unimom::portfolio::mvo_solve;
use unimom::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnimomStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Data = 5,
    Numeric = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnimomLayout {
    Long = 0,
    PerAsset = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnimomLoss {
    Softcap = 0,
    Sharpe = 1,
}

/// Annualized statistics; percentages are in percent.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UnimomMetrics {
    pub ann_return_pct: f64,
    pub ann_vol_pct: f64,
    pub sharpe: f64,
    pub sortino: f64,
    pub max_dd_pct: f64,
}

/// Opaque price panel.
pub struct UnimomPanel(PricePanel);

/// Opaque trained model.
pub struct UnimomModel(MmoeModel);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> UnimomStatus {
    match e {
        Error::Io { .. } => UnimomStatus::Io,
        Error::Parse { .. } | Error::Csv(_) | Error::Checkpoint(_) | Error::Config(_) => UnimomStatus::Parse,
        Error::InvalidArgument(_) => UnimomStatus::InvalidArgument,
        Error::Diff(_) => UnimomStatus::Numeric,
        Error::Data(_) | Error::Fold { .. } => UnimomStatus::Data,
    }
}

struct Fail(UnimomStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(UnimomStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> UnimomStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            UnimomStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            UnimomStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(UnimomStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length in
/// bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn unimom_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a settlement-price panel.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unimom_panel_load(
    path: *const c_char,
    layout: UnimomLayout,
    out: *mut *mut UnimomPanel,
) -> UnimomStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = path_arg(path, "path")?;
        let layout = match layout {
            UnimomLayout::Long => Layout::Long,
            UnimomLayout::PerAsset => Layout::PerAsset,
        };
        let panel = load_panel(path, layout)?;
        *out = Box::into_raw(Box::new(UnimomPanel(panel)));
        Ok(())
    })
}

/// Synthetic panel with planted per-asset trends over whole calendar years.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unimom_panel_synthesize(
    seed: u64,
    n_assets: usize,
    start_year: i32,
    years: u32,
    out: *mut *mut UnimomPanel,
) -> UnimomStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if n_assets == 0 || years == 0 {
            return Err(Fail(
                UnimomStatus::InvalidArgument,
                "need at least one asset and one year".into(),
            ));
        }
        let panel = synthesize_panel(
            seed,
            n_assets,
            SynthCalendar::Years { start_year, years },
            &RegimeSpec::planted_trends(n_assets),
        )?;
        *out = Box::into_raw(Box::new(UnimomPanel(panel)));
        Ok(())
    })
}

/// # Safety
/// `panel` must come from this library or be null; `n_assets` and
/// `n_dates` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unimom_panel_shape(
    panel: *const UnimomPanel,
    n_assets: *mut usize,
    n_dates: *mut usize,
) -> UnimomStatus {
    guard(|| {
        let p = panel.as_ref().ok_or_else(|| null("panel"))?;
        *out_ptr(n_assets, "n_assets")? = p.0.n_assets();
        *out_ptr(n_dates, "n_dates")? = p.0.n_dates();
        Ok(())
    })
}

/// # Safety
/// `panel` must come from this library (or be null) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn unimom_panel_free(panel: *mut UnimomPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Loads a model checkpoint written by the backtest.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unimom_model_load(path: *const c_char, out: *mut *mut UnimomModel) -> UnimomStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = MmoeModel::load(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(UnimomModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unimom_model_param_count(model: *const UnimomModel, out: *mut usize) -> UnimomStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out_ptr(out, "out")? = m.0.param_count();
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library (or be null) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn unimom_model_free(model: *mut UnimomModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Soft-capped Sharpe loss of a Sharpe ratio value.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unimom_soft_cap_loss(sr: f64, tau: f64, out: *mut f64) -> UnimomStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cap = SoftCapParams {
            tau,
            form: CapForm::Printed,
        };
        cap.validate()?;
        *out = soft_cap_of_sr(sr, cap);
        Ok(())
    })
}

/// Performance statistics of `len` daily returns.
///
/// # Safety
/// `returns` must be valid for `len` reads; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unimom_summarize(returns: *const f64, len: usize, out: *mut UnimomMetrics) -> UnimomStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if returns.is_null() {
            return Err(null("returns"));
        }
        let m = summarize("ffi", std::slice::from_raw_parts(returns, len))?;
        *out = UnimomMetrics {
            ann_return_pct: m.ann_return_pct,
            ann_vol_pct: m.ann_vol_pct,
            sharpe: m.sharpe,
            sortino: m.sortino,
            max_dd_pct: m.max_dd_pct,
        };
        Ok(())
    })
}

/// Long-only maximum-Sharpe weights over three assets on a grid of
/// `resolution` steps. `sigma` is row-major 3x3.
///
/// # Safety
/// `mu` must hold 3 values, `sigma` 9, and `out` room for 3.
#[no_mangle]
pub unsafe extern "C" fn unimom_mvo_solve(
    mu: *const f64,
    sigma: *const f64,
    resolution: usize,
    out: *mut f64,
) -> UnimomStatus {
    guard(|| {
        if mu.is_null() || sigma.is_null() || out.is_null() {
            return Err(null("mu, sigma or out"));
        }
        let m = std::slice::from_raw_parts(mu, 3);
        let s = std::slice::from_raw_parts(sigma, 9);
        let w = mvo_solve(
            [m[0], m[1], m[2]],
            [[s[0], s[1], s[2]], [s[3], s[4], s[5]], [s[6], s[7], s[8]]],
            resolution,
        )?;
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&w);
        Ok(())
    })
}

/// Runs the walk-forward backtest on `panel` and writes the run and report
/// files under `out_dir`. `config_path` may be null for defaults.
///
/// # Safety
/// `panel` must come from this library; string arguments must be
/// NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn unimom_backtest(
    panel: *const UnimomPanel,
    config_path: *const c_char,
    loss: UnimomLoss,
    out_dir: *const c_char,
) -> UnimomStatus {
    guard(|| {
        let p = panel.as_ref().ok_or_else(|| null("panel"))?;
        let cfg = if config_path.is_null() {
            RunConfig::default()
        } else {
            RunConfig::load(path_arg(config_path, "config_path")?)?
        };
        let out = path_arg(out_dir, "out_dir")?;
        let variant = match loss {
            UnimomLoss::Softcap => LossVariant::Softcap,
            UnimomLoss::Sharpe => LossVariant::Sharpe,
        };
        let report = unimom::backtest::run_backtest(&p.0, &cfg.spec(variant))?;
        unimom::report::save_run(&out, &unimom::report::RunRecord::from_report(&report, cfg.cap()))?;
        unimom::report::emit_report(&out)?;
        Ok(())
    })
}
