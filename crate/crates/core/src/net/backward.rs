//! Reverse-mode gradients for the layer chain.

use ndarray::{Array1, Array2, Axis};

use super::{ForwardTrace, LayerKind, NetworkParams};
use crate::error::{Error, Result};

/// Gradients for every learnable parameter, in the same order as the layers
/// they belong to. Running statistics have no gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dense: Vec<DenseGrad>,
    pub batch_norm: Vec<BatchNormGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrad {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
}

impl Gradients {
    /// All-zero gradients shaped like `params`.
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            dense: params
                .dense_layers()
                .iter()
                .map(|l| DenseGrad {
                    weight: Array2::zeros(l.weight.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
            batch_norm: params
                .batch_norm_layers()
                .iter()
                .map(|l| BatchNormGrad {
                    scale: Array1::zeros(l.scale.len()),
                    shift: Array1::zeros(l.shift.len()),
                })
                .collect(),
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for d in &mut self.dense {
            d.weight.mapv_inplace(|v| v * factor);
            d.bias.mapv_inplace(|v| v * factor);
        }
        for b in &mut self.batch_norm {
            b.scale.mapv_inplace(|v| v * factor);
            b.shift.mapv_inplace(|v| v * factor);
        }
        self
    }
}

impl NetworkParams {
    /// Propagate `out_grad` (dLoss/dOutput, one row per sample) back through
    /// the trace of one train-mode forward call. Returns parameter gradients
    /// and dLoss/dInput. The trace is consumed.
    ///
    /// Batch-norm gradients go through the batch statistics, so these are the
    /// exact gradients of the train-mode forward as a function of parameters
    /// and input.
    pub fn backward(
        &self,
        trace: ForwardTrace,
        out_grad: &Array2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if out_grad.dim() != (trace.batch, self.output_dim()) {
            return Err(Error::Invalid {
                op: "backward",
                msg: format!(
                    "gradient has shape {:?}, forward output was ({}, {})",
                    out_grad.dim(),
                    trace.batch,
                    self.output_dim()
                ),
            });
        }
        let ForwardTrace {
            dense_inputs,
            bn,
            relu_masks,
            dropout_masks,
            ..
        } = trace;

        let mut grads = Gradients::zeros_like(self);
        let mut g = out_grad.clone();
        // Cursors into the per-kind caches, walked backwards.
        let mut dense_i = dense_inputs.len();
        let mut bn_i = bn.len();
        let mut relu_i = relu_masks.len();
        let mut drop_i = dropout_masks.masks.len();
        let mut skip_stack: Vec<Array2<f64>> = Vec::new();
        // Residual boundaries alternate open/close in forward order.
        let mut boundary_index = self
            .layers()
            .iter()
            .filter(|l| matches!(l, LayerKind::ResidualBoundary))
            .count();

        for layer in self.layers().iter().rev() {
            match *layer {
                LayerKind::Dense { .. } => {
                    dense_i -= 1;
                    let x = &dense_inputs[dense_i];
                    let w = &self.dense_layers()[dense_i].weight;
                    grads.dense[dense_i].weight = x.t().dot(&g);
                    grads.dense[dense_i].bias = g.sum_axis(Axis(0));
                    g = g.dot(&w.t());
                }
                LayerKind::BatchNorm { .. } => {
                    bn_i -= 1;
                    let cache = &bn[bn_i];
                    let scale = &self.batch_norm_layers()[bn_i].scale;
                    let b = g.nrows() as f64;
                    grads.batch_norm[bn_i].scale = (&g * &cache.x_hat).sum_axis(Axis(0));
                    grads.batch_norm[bn_i].shift = g.sum_axis(Axis(0));
                    let dxhat = &g * scale;
                    let sum_dxhat = dxhat.sum_axis(Axis(0));
                    let sum_dxhat_xhat = (&dxhat * &cache.x_hat).sum_axis(Axis(0));
                    g = (dxhat * b - &sum_dxhat - &cache.x_hat * &sum_dxhat_xhat)
                        * &cache.inv_std
                        / b;
                }
                LayerKind::Relu => {
                    relu_i -= 1;
                    g = g * &relu_masks[relu_i];
                }
                LayerKind::Dropout { rate } => {
                    drop_i -= 1;
                    g = g * &dropout_masks.masks[drop_i] / (1.0 - rate);
                }
                LayerKind::ResidualBoundary => {
                    boundary_index -= 1;
                    if boundary_index % 2 == 1 {
                        // Forward close (the add): gradient also flows to the
                        // saved skip activation.
                        skip_stack.push(g.clone());
                    } else {
                        // Forward open (the save): merge the skip gradient.
                        let s = skip_stack.pop().ok_or(Error::Invalid {
                            op: "backward",
                            msg: "residual bookkeeping underflow".into(),
                        })?;
                        g = g + s;
                    }
                }
            }
        }
        Ok((grads, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_module, DropoutMasks, LayerKind};
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let mut params = build_module(6, 4, 8, 0.5, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::from_shape_fn((3, 6), |_| rng.random_range(-1.0..1.0));
        let (y, trace) = params.forward_train(&x, 0.1, &mut rng).unwrap();
        let g = Array2::zeros(y.dim());
        let (grads, dx) = params.backward(trace, &g).unwrap();
        assert!(grads.dense.iter().all(|d| d.weight.iter().all(|&v| v == 0.0)
            && d.bias.iter().all(|&v| v == 0.0)));
        assert!(grads
            .batch_norm
            .iter()
            .all(|b| b.scale.iter().all(|&v| v == 0.0) && b.shift.iter().all(|&v| v == 0.0)));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_wrong_gradient_shape() {
        let mut params = build_module(6, 4, 8, 0.5, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::zeros((3, 6));
        let (_, trace) = params.forward_train(&x, 0.1, &mut rng).unwrap();
        let g = Array2::zeros((3, 5));
        assert!(params.backward(trace, &g).is_err());
    }

    #[test]
    fn input_gradient_of_single_dense_is_g_times_w_transpose() {
        let layers = vec![LayerKind::Dense { in_dim: 2, out_dim: 2 }];
        let mut params = crate::net::NetworkParams::from_layers(layers, 0).unwrap();
        params.dense_layers_mut()[0]
            .weight
            .assign(&array![[1.0, 2.0], [3.0, 4.0]]);
        let x = array![[1.0, -1.0], [0.5, 2.0]];
        let masks = DropoutMasks { masks: vec![] };
        let (_, trace) = params.forward_train_masked(&x, &masks, None).unwrap();
        let g = array![[1.0, 0.0], [0.0, 1.0]];
        let (grads, dx) = params.backward(trace, &g).unwrap();
        // dX = g · Wᵀ
        assert_eq!(dx, array![[1.0, 3.0], [2.0, 4.0]]);
        // dW = Xᵀ · g, dB = column sums of g
        assert_eq!(grads.dense[0].weight, array![[1.0, 0.5], [-1.0, 2.0]]);
        assert_eq!(grads.dense[0].bias, array![1.0, 1.0]);
    }

    /// Central finite differences over every parameter of small networks,
    /// with dropout masks held fixed. The loss is a fixed random linear
    /// functional of the network output.
    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut failures = Vec::new();
        for (case, &(hidden, batch)) in [(4usize, 2usize), (4, 4), (8, 2), (8, 4)]
            .iter()
            .enumerate()
        {
            let seed = 100 + case as u64;
            let mut params = build_module(5, 3, hidden, 0.4, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let x = Array2::from_shape_fn((batch, 5), |_| rng.random_range(-1.5..1.5));
            let loss_weights = Array2::from_shape_fn((batch, 3), |_| rng.random_range(-1.0..1.0));

            let (y, trace) = params.forward_train(&x, 0.1, &mut rng).unwrap();
            let masks = trace.dropout_masks().clone();
            let _ = y;
            let (grads, _) = params.backward(trace, &loss_weights).unwrap();

            let loss =
                |p: &crate::net::NetworkParams| -> f64 {
                    let out = p.forward_train_frozen(&x, &masks).unwrap();
                    (&out * &loss_weights).sum()
                };
            let eps = 1e-4;
            let check = |analytic: f64, plus: f64, minus: f64, label: String| {
                let fd = (plus - minus) / (2.0 * eps);
                let denom = analytic.abs().max(fd.abs()).max(1e-6);
                let rel = (analytic - fd).abs() / denom;
                if rel >= 1e-4 {
                    return Some(format!("{label}: analytic {analytic}, fd {fd}, rel {rel}"));
                }
                None
            };

            for li in 0..params.dense_layers().len() {
                let (rows, cols) = params.dense_layers()[li].weight.dim();
                for r in 0..rows {
                    for c in 0..cols {
                        let orig = params.dense_layers()[li].weight[[r, c]];
                        params.dense_layers_mut()[li].weight[[r, c]] = orig + eps;
                        let plus = loss(&params);
                        params.dense_layers_mut()[li].weight[[r, c]] = orig - eps;
                        let minus = loss(&params);
                        params.dense_layers_mut()[li].weight[[r, c]] = orig;
                        if let Some(f) = check(
                            grads.dense[li].weight[[r, c]],
                            plus,
                            minus,
                            format!("case {case} dense {li} w[{r},{c}]"),
                        ) {
                            failures.push(f);
                        }
                    }
                }
                for c in 0..params.dense_layers()[li].bias.len() {
                    let orig = params.dense_layers()[li].bias[c];
                    params.dense_layers_mut()[li].bias[c] = orig + eps;
                    let plus = loss(&params);
                    params.dense_layers_mut()[li].bias[c] = orig - eps;
                    let minus = loss(&params);
                    params.dense_layers_mut()[li].bias[c] = orig;
                    if let Some(f) = check(
                        grads.dense[li].bias[c],
                        plus,
                        minus,
                        format!("case {case} dense {li} b[{c}]"),
                    ) {
                        failures.push(f);
                    }
                }
            }
            for bi in 0..params.batch_norm_layers().len() {
                for c in 0..params.batch_norm_layers()[bi].scale.len() {
                    let orig = params.batch_norm_layers()[bi].scale[c];
                    params.batch_norm_layers_mut()[bi].scale[c] = orig + eps;
                    let plus = loss(&params);
                    params.batch_norm_layers_mut()[bi].scale[c] = orig - eps;
                    let minus = loss(&params);
                    params.batch_norm_layers_mut()[bi].scale[c] = orig;
                    if let Some(f) = check(
                        grads.batch_norm[bi].scale[c],
                        plus,
                        minus,
                        format!("case {case} bn {bi} scale[{c}]"),
                    ) {
                        failures.push(f);
                    }
                    let orig = params.batch_norm_layers()[bi].shift[c];
                    params.batch_norm_layers_mut()[bi].shift[c] = orig + eps;
                    let plus = loss(&params);
                    params.batch_norm_layers_mut()[bi].shift[c] = orig - eps;
                    let minus = loss(&params);
                    params.batch_norm_layers_mut()[bi].shift[c] = orig;
                    if let Some(f) = check(
                        grads.batch_norm[bi].shift[c],
                        plus,
                        minus,
                        format!("case {case} bn {bi} shift[{c}]"),
                    ) {
                        failures.push(f);
                    }
                }
            }
        }
        assert!(
            failures.is_empty(),
            "{} gradient mismatches:\n{}",
            failures.len(),
            failures.join("\n")
        );
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut params = build_module(5, 3, 8, 0.4, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0));
        let lw = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0));
        let (_, trace) = params.forward_train(&x, 0.1, &mut rng).unwrap();
        let masks = trace.dropout_masks().clone();
        let (_, dx) = params.backward(trace, &lw).unwrap();
        let eps = 1e-5;
        for r in 0..3 {
            for c in 0..5 {
                let mut xp = x.clone();
                xp[[r, c]] += eps;
                let mut xm = x.clone();
                xm[[r, c]] -= eps;
                let plus = (&params.forward_train_frozen(&xp, &masks).unwrap() * &lw).sum();
                let minus = (&params.forward_train_frozen(&xm, &masks).unwrap() * &lw).sum();
                let fd = (plus - minus) / (2.0 * eps);
                let denom = dx[[r, c]].abs().max(fd.abs()).max(1e-6);
                assert!(
                    (dx[[r, c]] - fd).abs() / denom < 1e-4,
                    "input grad [{r},{c}]: {} vs fd {}",
                    dx[[r, c]],
                    fd
                );
            }
        }
    }
}
