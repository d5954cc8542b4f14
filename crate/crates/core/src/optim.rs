//! The Adamax update rule, applied per parameter tensor.
//!
//! Both variants share the moment recursions
//! `m <- mu*m + (1-mu)*g` and `n <- max(v*n, |g|)` (elementwise) and correct
//! the first moment by `1/(1 - mu^t)`. They differ in the denominator:
//!
//! * `Standard` uses the raw infinity-norm accumulator,
//!   `step = -(eta / (1 - mu^t)) * m / (n + eps)`.
//! * `FullBiasCorrection` also rescales the accumulator by `1/(1 - v^t)`,
//!   `step = -eta * m_hat / (n_hat + eps)`, which shrinks early steps by
//!   roughly `1/(1 - v)` and converges to `Standard` as `t` grows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{MiniDense, Scalar, Tensor};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("shape mismatch: parameter has {param} elements, {other} has {actual}")]
    ShapeMismatch {
        param: usize,
        other: &'static str,
        actual: usize,
    },
    #[error("non-finite gradient; training is poisoned")]
    NonFiniteGrad,
    #[error("invalid hyperparameter: {0}")]
    BadHyper(String),
    #[error("gradient buffer missing")]
    MissingGrad,
    #[error("optimizer has {states} states but the model has {params} parameters")]
    StateMismatch { states: usize, params: usize },
}

/// Decay rates, learning rate, and the division guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamaxHyper {
    /// First-moment decay (0.9).
    pub momentum_decay: f64,
    /// Infinity-norm decay (0.999).
    pub infnorm_decay: f64,
    /// Base step size (0.001).
    pub learning_rate: f64,
    /// Keeps the denominator nonzero (1e-8).
    pub epsilon: f64,
}

impl Default for AdamaxHyper {
    fn default() -> Self {
        AdamaxHyper {
            momentum_decay: 0.9,
            infnorm_decay: 0.999,
            learning_rate: 0.001,
            epsilon: 1e-8,
        }
    }
}

impl AdamaxHyper {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(0.0..1.0).contains(&self.momentum_decay) {
            return Err(OptimError::BadHyper(format!(
                "momentum_decay {} outside [0, 1)",
                self.momentum_decay
            )));
        }
        if !(0.0..1.0).contains(&self.infnorm_decay) {
            return Err(OptimError::BadHyper(format!(
                "infnorm_decay {} outside [0, 1)",
                self.infnorm_decay
            )));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(OptimError::BadHyper("learning_rate must be > 0".into()));
        }
        if self.epsilon <= 0.0 || self.epsilon.is_nan() {
            return Err(OptimError::BadHyper("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Which denominator convention to apply; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdamaxVariant {
    Standard,
    FullBiasCorrection,
}

/// Per-parameter optimizer state: step count, first moment, and the
/// exponentially-decayed infinity norm of the gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamaxState<S: Scalar = f32> {
    pub step: u64,
    pub first_moment: Vec<S>,
    pub inf_norm: Vec<S>,
}

impl<S: Scalar> AdamaxState<S> {
    pub fn zeros(len: usize) -> Self {
        AdamaxState {
            step: 0,
            first_moment: vec![S::ZERO; len],
            inf_norm: vec![S::ZERO; len],
        }
    }
}

fn decay_pow(decay: f64, t: u64) -> f64 {
    // beyond ~1e6 steps the power underflows to 0 anyway
    decay.powi(t.min(1_000_000) as i32)
}

/// One Adamax update for a single parameter slice.
///
/// `state.step` is the pre-increment count; on return it has advanced by one
/// and `param` holds the updated values.
pub fn adamax_step_slice<S: Scalar>(
    state: &mut AdamaxState<S>,
    param: &mut [S],
    grad: &[S],
    hyper: &AdamaxHyper,
    variant: AdamaxVariant,
) -> Result<(), OptimError> {
    hyper.validate()?;
    if grad.len() != param.len() {
        return Err(OptimError::ShapeMismatch {
            param: param.len(),
            other: "grad",
            actual: grad.len(),
        });
    }
    if state.first_moment.len() != param.len() {
        return Err(OptimError::ShapeMismatch {
            param: param.len(),
            other: "state",
            actual: state.first_moment.len(),
        });
    }
    if grad.iter().any(|g| !g.is_finite_value()) {
        return Err(OptimError::NonFiniteGrad);
    }

    let t = state.step + 1;
    let mu = hyper.momentum_decay;
    let momentum_correction = 1.0 - decay_pow(mu, t);
    let infnorm_correction = 1.0 - decay_pow(hyper.infnorm_decay, t);

    for i in 0..param.len() {
        let g = grad[i].to_f64();
        let m = mu * state.first_moment[i].to_f64() + (1.0 - mu) * g;
        let n = (hyper.infnorm_decay * state.inf_norm[i].to_f64()).max(g.abs());
        state.first_moment[i] = S::from_f64(m);
        state.inf_norm[i] = S::from_f64(n);

        let delta = match variant {
            AdamaxVariant::Standard => {
                -(hyper.learning_rate / momentum_correction) * m / (n + hyper.epsilon)
            }
            AdamaxVariant::FullBiasCorrection => {
                let m_hat = m / momentum_correction;
                let n_hat = n / infnorm_correction;
                -hyper.learning_rate * m_hat / (n_hat + hyper.epsilon)
            }
        };
        param[i] = S::from_f64(param[i].to_f64() + delta);
    }
    state.step = t;
    Ok(())
}

/// Tensor wrapper around [`adamax_step_slice`] that consumes the tensor's
/// gradient buffer.
pub fn adamax_step<S: Scalar>(
    state: &mut AdamaxState<S>,
    param: &mut Tensor<S>,
    hyper: &AdamaxHyper,
    variant: AdamaxVariant,
) -> Result<(), OptimError> {
    let grad = param
        .grad()
        .ok_or(OptimError::MissingGrad)?
        .to_vec();
    adamax_step_slice(state, param.data_mut(), &grad, hyper, variant)
}

/// Optimizer instance spanning every parameter of a model, in the model's
/// fixed parameter order.
pub struct Adamax<S: Scalar = f32> {
    pub hyper: AdamaxHyper,
    pub variant: AdamaxVariant,
    pub states: Vec<AdamaxState<S>>,
}

impl<S: Scalar> Adamax<S> {
    /// Fresh state (t = 0, zero moments) for every parameter of the model.
    pub fn init(model: &MiniDense<S>, hyper: AdamaxHyper, variant: AdamaxVariant) -> Self {
        let states = model
            .parameters()
            .map(|(_, t)| AdamaxState::zeros(t.numel()))
            .collect();
        Adamax {
            hyper,
            variant,
            states,
        }
    }

    /// Applies one step to every parameter from its accumulated gradient.
    pub fn step_model(&mut self, model: &mut MiniDense<S>) -> Result<(), OptimError> {
        let n_params = model.parameters().count();
        if self.states.len() != n_params {
            return Err(OptimError::StateMismatch {
                states: self.states.len(),
                params: n_params,
            });
        }
        for (state, (_, param)) in self.states.iter_mut().zip(model.parameters_mut()) {
            adamax_step(state, param, &self.hyper, self.variant)?;
        }
        Ok(())
    }

    /// Step count (shared across parameters once any step has run).
    pub fn step_count(&self) -> u64 {
        self.states.first().map(|s| s.step).unwrap_or(0)
    }
}
