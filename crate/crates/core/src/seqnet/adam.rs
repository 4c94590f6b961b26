//! Bias-corrected Adam updates over the parameter blocks.

use super::real::Real;
use super::{LstmParams, NetError};

/// First/second-moment accumulators shaped like the parameters, plus the
/// step count and hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m: LstmParams<F>,
    v: LstmParams<F>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<F: Real> AdamState<F> {
    /// Zero-initialized moments with the default betas 0.9 / 0.999 and
    /// epsilon 1e-8.
    pub fn new(params: &LstmParams<F>, lr: f64) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam step. A non-finite gradient aborts before any parameter or
/// moment is touched.
pub fn adam_update<F: Real>(
    params: &mut LstmParams<F>,
    grads: &LstmParams<F>,
    state: &mut AdamState<F>,
) -> Result<(), NetError> {
    {
        let grad_slices = grads.slices();
        if let Some(bad) = grad_slices
            .iter()
            .position(|s| s.iter().any(|g| !g.is_finite()))
        {
            return Err(NetError::NonFiniteGradient {
                block: grads.block_names().swap_remove(bad),
            });
        }
        if params.slices().len() != grad_slices.len()
            || params
                .slices()
                .iter()
                .zip(&grad_slices)
                .any(|(p, g)| p.len() != g.len())
        {
            return Err(NetError::DimensionMismatch {
                what: "gradient shape does not match parameters".to_string(),
            });
        }
    }

    state.t += 1;
    let beta1 = F::from_f64(state.beta1);
    let beta2 = F::from_f64(state.beta2);
    let one_minus_beta1 = F::from_f64(1.0 - state.beta1);
    let one_minus_beta2 = F::from_f64(1.0 - state.beta2);
    let inv_bc1 = F::from_f64(1.0 / (1.0 - state.beta1.powi(state.t as i32)));
    let inv_bc2 = F::from_f64(1.0 / (1.0 - state.beta2.powi(state.t as i32)));
    let lr = F::from_f64(state.lr);
    let eps = F::from_f64(state.eps);

    let mut p_slices = params.slices_mut();
    let mut m_slices = state.m.slices_mut();
    let mut v_slices = state.v.slices_mut();
    let g_slices = grads.slices();
    for (((p, g), m), v) in p_slices
        .iter_mut()
        .zip(&g_slices)
        .zip(m_slices.iter_mut())
        .zip(v_slices.iter_mut())
    {
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = beta1 * m[j] + one_minus_beta1 * gj;
            v[j] = beta2 * v[j] + one_minus_beta2 * gj * gj;
            let m_hat = m[j] * inv_bc1;
            let v_hat = v[j] * inv_bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    debug_assert!(params.all_finite());
    Ok(())
}
