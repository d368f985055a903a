use serde::{Deserialize, Serialize};

use super::{DiffError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale gradients so their global L2 norm is at most this value.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
        }
    }
}

/// Scales `grads` in place so that their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        Self {
            config,
            state: AdamState::new(params),
        }
    }

    /// Bias-corrected Adam update. `names` labels parameters in errors.
    pub fn step(&mut self, params: &mut [Tensor], mut grads: Vec<Tensor>, names: &[String]) -> Result<(), DiffError> {
        if params.len() != grads.len() || params.len() != self.state.m.len() {
            return Err(DiffError::InvalidArgument(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.state.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(DiffError::ShapeMismatch {
                    op: "adam",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                let param = names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
                return Err(DiffError::NonFiniteGradient { param });
            }
        }
        if let Some(max_norm) = self.config.clip_norm {
            clip_global_norm(&mut grads, max_norm);
        }

        let AdamConfig {
            lr, beta1, beta2, eps, ..
        } = self.config;
        self.state.step += 1;
        let t = self.state.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (idx, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
            let m = self.state.m[idx].data_mut();
            let v = self.state.v[idx].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = vec![Tensor::vector(vec![1.0, -2.0, 3.0])];
        let before = params.clone();
        let mut opt = Adam::new(AdamConfig::default(), &params);
        for _ in 0..10 {
            opt.step(&mut params, vec![Tensor::zeros(&[3])], &names(1)).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(opt.state.step, 10);
    }

    #[test]
    fn first_step_moves_against_gradient_by_lr() {
        let mut params = vec![Tensor::vector(vec![0.5, 0.5, 0.5])];
        let g = Tensor::vector(vec![0.3, -2.0, 1e-3]);
        let mut opt = Adam::new(AdamConfig::default(), &params);
        opt.step(&mut params, vec![g.clone()], &names(1)).unwrap();
        for (p, gv) in params[0].data().iter().zip(g.data()) {
            let delta = p - 0.5;
            assert_eq!(delta.signum(), -gv.signum());
            // fresh state: |delta| = lr * |g| / (|g| + eps)
            let expected = 1e-3 * gv.abs() / (gv.abs() + 1e-8);
            assert!((delta.abs() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_calls_are_deterministic() {
        let init = vec![Tensor::vector(vec![0.1, 0.2]), Tensor::scalar(-1.0)];
        let grads = vec![Tensor::vector(vec![0.7, -0.1]), Tensor::scalar(2.5)];
        let run = || {
            let mut p = init.clone();
            let mut opt = Adam::new(AdamConfig::default(), &p);
            for _ in 0..3 {
                opt.step(&mut p, grads.clone(), &names(2)).unwrap();
            }
            (p, opt.state)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut params = vec![Tensor::scalar(0.0), Tensor::scalar(0.0)];
        let mut opt = Adam::new(AdamConfig::default(), &params);
        let err = opt
            .step(
                &mut params,
                vec![Tensor::scalar(1.0), Tensor::scalar(f64::NAN)],
                &["w".into(), "bias".into()],
            )
            .unwrap_err();
        assert_eq!(err, DiffError::NonFiniteGradient { param: "bias".into() });
        assert_eq!(opt.state.step, 0);
    }

    #[test]
    fn global_norm_clipping() {
        let mut g = vec![Tensor::vector(vec![3.0, 0.0]), Tensor::scalar(4.0)];
        let norm = clip_global_norm(&mut g, 1.0);
        assert_eq!(norm, 5.0);
        let after: f64 = g.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
    }
}
