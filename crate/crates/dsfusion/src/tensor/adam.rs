//! Adam optimizer state and update rule.

use super::Real;
use crate::error::{Error, Result};

/// Per-parameter Adam moment buffers.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub first_moment: Vec<Real>,
    pub second_moment: Vec<Real>,
    pub step_count: u64,
    pub beta1: Real,
    pub beta2: Real,
    pub epsilon: Real,
}

impl AdamState {
    pub fn new(len: usize) -> AdamState {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update applied to `params` in place.
pub fn adam_step(params: &mut [Real], grad: &[Real], state: &mut AdamState, lr: Real) -> Result<()> {
    if grad.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(Error::Contract(format!(
            "adam_step: params {}, grad {}, state {}",
            params.len(),
            grad.len(),
            state.first_moment.len()
        )));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        let m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        let v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
