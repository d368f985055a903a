use super::{DiffError, Tape, Tensor, Var};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// max over all parameter entries of `|analytic - numeric| / max(1, |numeric|)`
    pub max_rel_error: f64,
    /// (parameter index, flat element index) of the worst entry
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
}

fn evaluate<F, E>(f: &F, params: &[Tensor], trainable: bool) -> Result<(Tape, Var, Vec<Var>), E>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<DiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|p| {
            if trainable {
                tape.param(p.clone())
            } else {
                tape.constant(p.clone())
            }
        })
        .collect();
    let loss = f(&mut tape, &vars)?;
    match tape.item(loss) {
        Some(v) if v.is_finite() => Ok((tape, loss, vars)),
        Some(_) => Err(DiffError::NonFiniteObjective.into()),
        None => Err(DiffError::NonScalarLoss {
            shape: tape.value(loss).shape().to_vec(),
        }
        .into()),
    }
}

/// Compares reverse-mode gradients of the scalar built by `f` against central
/// differences with step `h`.
///
/// `f` receives a fresh tape and one leaf per entry of `params`, and returns
/// the loss node.
pub fn finite_diff_check<F, E>(f: F, params: &[Tensor], h: f64) -> Result<GradCheck, E>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<DiffError>,
{
    if !(h > 0.0) {
        return Err(DiffError::InvalidArgument(format!("finite-difference step {h}")).into());
    }
    let (tape, loss, vars) = evaluate(&f, params, true)?;
    let mut grads = tape.backward(loss)?;
    drop(tape);
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| grads.take(v).expect("every param leaf receives a gradient"))
        .collect();

    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
    };
    let mut work = params.to_vec();
    for (pi, grad) in analytic.iter().enumerate() {
        for j in 0..work[pi].numel() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + h;
            let (t, l, _) = evaluate(&f, &work, false)?;
            let plus = t.item(l).unwrap_or(f64::NAN);
            work[pi].data_mut()[j] = orig - h;
            let (t, l, _) = evaluate(&f, &work, false)?;
            let minus = t.item(l).unwrap_or(f64::NAN);
            work[pi].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[j];
            let rel = (a - numeric).abs() / numeric.abs().max(1.0);
            out.entries_checked += 1;
            if rel > out.max_rel_error || out.entries_checked == 1 {
                out.max_rel_error = rel;
                out.worst = (pi, j);
                out.analytic = a;
                out.numeric = numeric;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let check =
            finite_diff_check::<_, DiffError>(|t, p| t.mul(p[0], p[0]), &[Tensor::scalar(3.0)], DEFAULT_FD_STEP)
                .unwrap();
        assert!(check.max_rel_error < 1e-7, "{check:?}");
        assert!((check.analytic - 6.0).abs() < 1e-12);
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let check = finite_diff_check::<_, DiffError>(
            |t, p| {
                let z = t.mul_scalar(p[0], 0.0)?;
                let s = t.sum(z)?;
                t.add_scalar(s, 4.0)
            },
            &[Tensor::vector(vec![1.0, -2.0, 0.5])],
            DEFAULT_FD_STEP,
        )
        .unwrap();
        assert!(check.max_rel_error < 1e-9);
        assert_eq!(check.entries_checked, 3);
    }

    #[test]
    fn nan_objective_is_an_error() {
        let res = finite_diff_check::<_, DiffError>(
            |t, p| {
                let s = t.sum(p[0])?;
                t.mul_scalar(s, f64::NAN)
            },
            &[Tensor::scalar(1.0)],
            DEFAULT_FD_STEP,
        );
        assert_eq!(res.unwrap_err(), DiffError::NonFiniteObjective);
    }
}
