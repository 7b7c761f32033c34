//! Adam with bias correction.

use ndarray::{Array1, Array2};

use super::{Gradients, NetworkParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators mirroring a parameter set, plus the step
/// counter used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub step: u64,
    pub m_dense: Vec<(Array2<f64>, Array1<f64>)>,
    pub v_dense: Vec<(Array2<f64>, Array1<f64>)>,
    pub m_bn: Vec<(Array1<f64>, Array1<f64>)>,
    pub v_bn: Vec<(Array1<f64>, Array1<f64>)>,
}

impl AdamState {
    pub fn new(params: &NetworkParams, hyper: AdamHyper) -> Self {
        let dense_zero: Vec<_> = params
            .dense_layers()
            .iter()
            .map(|l| (Array2::zeros(l.weight.dim()), Array1::zeros(l.bias.len())))
            .collect();
        let bn_zero: Vec<_> = params
            .batch_norm_layers()
            .iter()
            .map(|l| (Array1::zeros(l.scale.len()), Array1::zeros(l.shift.len())))
            .collect();
        Self {
            hyper,
            step: 0,
            m_dense: dense_zero.clone(),
            v_dense: dense_zero,
            m_bn: bn_zero.clone(),
            v_bn: bn_zero,
        }
    }
}

fn update_array<D: ndarray::Dimension>(
    p: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    h: &AdamHyper,
    c1: f64,
    c2: f64,
) {
    ndarray::Zip::from(p)
        .and(g)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = h.beta1 * *m + (1.0 - h.beta1) * g;
            *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
        });
}

/// One Adam step over every learnable parameter. Rejects non-finite
/// gradients with a diagnostic naming the offending layer.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    state: &mut AdamState,
) -> Result<()> {
    if grads.dense.len() != params.dense_layers().len()
        || grads.batch_norm.len() != params.batch_norm_layers().len()
        || state.m_dense.len() != params.dense_layers().len()
        || state.m_bn.len() != params.batch_norm_layers().len()
    {
        return Err(Error::Invalid {
            op: "adam_step",
            msg: "gradient/state layout does not match parameters".into(),
        });
    }
    for (i, d) in grads.dense.iter().enumerate() {
        if d.weight.dim() != params.dense_layers()[i].weight.dim()
            || d.bias.len() != params.dense_layers()[i].bias.len()
        {
            return Err(Error::Invalid {
                op: "adam_step",
                msg: format!("dense layer {i} gradient shape mismatch"),
            });
        }
        if d.weight.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                location: format!("dense layer {i} weight"),
            });
        }
        if d.bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                location: format!("dense layer {i} bias"),
            });
        }
    }
    for (i, b) in grads.batch_norm.iter().enumerate() {
        if b.scale.len() != params.batch_norm_layers()[i].scale.len() {
            return Err(Error::Invalid {
                op: "adam_step",
                msg: format!("batch-norm layer {i} gradient shape mismatch"),
            });
        }
        if b.scale.iter().any(|v| !v.is_finite()) || b.shift.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                location: format!("batch-norm layer {i}"),
            });
        }
    }

    state.step += 1;
    let h = state.hyper;
    let c1 = 1.0 - h.beta1.powi(state.step as i32);
    let c2 = 1.0 - h.beta2.powi(state.step as i32);

    for (i, d) in grads.dense.iter().enumerate() {
        let layer = &mut params.dense_layers_mut()[i];
        update_array(&mut layer.weight, &d.weight, &mut state.m_dense[i].0, &mut state.v_dense[i].0, &h, c1, c2);
        update_array(&mut layer.bias, &d.bias, &mut state.m_dense[i].1, &mut state.v_dense[i].1, &h, c1, c2);
    }
    for (i, b) in grads.batch_norm.iter().enumerate() {
        let layer = &mut params.batch_norm_layers_mut()[i];
        update_array(&mut layer.scale, &b.scale, &mut state.m_bn[i].0, &mut state.v_bn[i].0, &h, c1, c2);
        update_array(&mut layer.shift, &b.shift, &mut state.m_bn[i].1, &mut state.v_bn[i].1, &h, c1, c2);
    }
    Ok(())
}
