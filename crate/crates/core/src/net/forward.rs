//! Forward pass in train and eval modes.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::{LayerKind, NetworkParams, BN_EPS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dropout keep/drop masks (entries 0 or 1, pre-scaling), one per dropout
/// layer in chain order. Reusing a mask set makes a train-mode forward a
/// deterministic function of (params, input), which the finite-difference
/// gradient checks rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub masks: Vec<Array2<f64>>,
}

pub(super) struct BnCache {
    pub x_hat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

/// Everything the backward pass needs from one train-mode forward call.
/// Consumed by value: a trace drives exactly one backward pass.
pub struct ForwardTrace {
    pub(super) mode: Mode,
    pub(super) batch: usize,
    pub(super) dense_inputs: Vec<Array2<f64>>,
    pub(super) bn: Vec<BnCache>,
    pub(super) relu_masks: Vec<Array2<f64>>,
    pub(super) dropout_masks: DropoutMasks,
}

impl ForwardTrace {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn dropout_masks(&self) -> &DropoutMasks {
        &self.dropout_masks
    }
}

fn check_input(params: &NetworkParams, x: &Array2<f64>) -> Result<()> {
    if x.ncols() != params.input_dim() {
        return Err(Error::DimMismatch {
            op: "forward",
            expected: params.input_dim(),
            got: x.ncols(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            op: "forward",
            what: "input batch".into(),
        });
    }
    Ok(())
}

impl NetworkParams {
    /// Draw one dropout mask per dropout layer for a batch of `rows` rows.
    pub fn draw_dropout_masks(&self, rows: usize, rng: &mut impl Rng) -> DropoutMasks {
        let mut masks = Vec::new();
        let mut width = self.input_dim();
        for layer in &self.layers {
            match *layer {
                LayerKind::Dense { out_dim, .. } => width = out_dim,
                LayerKind::Dropout { rate } => {
                    let m = Array2::from_shape_fn((rows, width), |_| {
                        if rng.random::<f64>() < rate {
                            0.0
                        } else {
                            1.0
                        }
                    });
                    masks.push(m);
                }
                _ => {}
            }
        }
        DropoutMasks { masks }
    }

    /// Train-mode forward: batch statistics for batch-norm, dropout active,
    /// running statistics updated by EMA with the given momentum. Requires a
    /// batch of at least two rows. Dropout masks are drawn from `rng`.
    pub fn forward_train(
        &mut self,
        x: &Array2<f64>,
        bn_momentum: f64,
        rng: &mut impl Rng,
    ) -> Result<(Array2<f64>, ForwardTrace)> {
        let masks = self.draw_dropout_masks(x.nrows(), rng);
        self.forward_train_masked(x, &masks, Some(bn_momentum))
    }

    /// Train-mode forward with caller-provided dropout masks. Running
    /// statistics are updated only when `bn_momentum` is given; with `None`
    /// the call leaves `self` untouched and is a deterministic function of
    /// (self, x), which the finite-difference gradient checks rely on.
    pub fn forward_train_masked(
        &mut self,
        x: &Array2<f64>,
        masks: &DropoutMasks,
        bn_momentum: Option<f64>,
    ) -> Result<(Array2<f64>, ForwardTrace)> {
        check_input(self, x)?;
        if x.nrows() < 2 {
            return Err(Error::BatchTooSmall { got: x.nrows() });
        }
        self.walk_train(x, bn_momentum, masks)
    }

    /// Loss-evaluation variant of [`forward_train_masked`](Self::forward_train_masked)
    /// on an immutable receiver: same math, no trace, no stat updates.
    pub fn forward_train_frozen(
        &self,
        x: &Array2<f64>,
        masks: &DropoutMasks,
    ) -> Result<Array2<f64>> {
        // The walk needs &mut for the running-stat branch even when momentum
        // is None; a clone keeps this entry point immutable.
        let mut scratch = self.clone();
        let (y, _) = scratch.forward_train_masked(x, masks, None)?;
        Ok(y)
    }

    fn walk_train(
        &mut self,
        x: &Array2<f64>,
        bn_momentum: Option<f64>,
        masks: &DropoutMasks,
    ) -> Result<(Array2<f64>, ForwardTrace)> {
        let b = x.nrows();
        let mut cur = x.clone();
        let mut dense_inputs = Vec::new();
        let mut bn_caches = Vec::new();
        let mut relu_masks = Vec::new();
        let mut skip: Option<Array2<f64>> = None;
        let mut dense_i = 0;
        let mut bn_i = 0;
        let mut drop_i = 0;

        let layers = self.layers.clone();
        for layer in &layers {
            match *layer {
                LayerKind::Dense { .. } => {
                    let l = &self.dense[dense_i];
                    let y = cur.dot(&l.weight) + &l.bias;
                    dense_inputs.push(cur);
                    cur = y;
                    dense_i += 1;
                }
                LayerKind::BatchNorm { .. } => {
                    let mean = cur.mean_axis(Axis(0)).expect("batch nonempty");
                    let centered = &cur - &mean;
                    let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).unwrap();
                    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                    let x_hat = &centered * &inv_std;
                    let l = &mut self.batch_norm[bn_i];
                    cur = &x_hat * &l.scale + &l.shift;
                    if let Some(m) = bn_momentum {
                        l.running_mean = &l.running_mean * (1.0 - m) + &mean * m;
                        l.running_var = &l.running_var * (1.0 - m) + &var * m;
                    }
                    bn_caches.push(BnCache { x_hat, inv_std });
                    bn_i += 1;
                }
                LayerKind::Relu => {
                    let mask = cur.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    cur = &cur * &mask;
                    relu_masks.push(mask);
                }
                LayerKind::Dropout { rate } => {
                    let mask = masks.masks.get(drop_i).ok_or(Error::DimMismatch {
                        op: "forward_train",
                        expected: drop_i + 1,
                        got: masks.masks.len(),
                    })?;
                    if mask.dim() != cur.dim() {
                        return Err(Error::Invalid {
                            op: "forward_train",
                            msg: format!(
                                "dropout mask {drop_i} has shape {:?}, activations are {:?}",
                                mask.dim(),
                                cur.dim()
                            ),
                        });
                    }
                    cur = &cur * mask / (1.0 - rate);
                    drop_i += 1;
                }
                LayerKind::ResidualBoundary => match skip.take() {
                    None => skip = Some(cur.clone()),
                    Some(s) => cur = cur + s,
                },
            }
        }
        let trace = ForwardTrace {
            mode: Mode::Train,
            batch: b,
            dense_inputs,
            bn: bn_caches,
            relu_masks,
            dropout_masks: DropoutMasks {
                masks: masks.masks.clone(),
            },
        };
        Ok((cur, trace))
    }

    /// Eval-mode forward: running statistics for batch-norm, dropout off.
    /// A pure function of (self, x); any batch size ≥ 1.
    pub fn forward_eval(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_input(self, x)?;
        let mut cur = x.clone();
        let mut skip: Option<Array2<f64>> = None;
        let mut dense_i = 0;
        let mut bn_i = 0;
        for layer in &self.layers {
            match *layer {
                LayerKind::Dense { .. } => {
                    let l = &self.dense[dense_i];
                    cur = cur.dot(&l.weight) + &l.bias;
                    dense_i += 1;
                }
                LayerKind::BatchNorm { .. } => {
                    let l = &self.batch_norm[bn_i];
                    let inv_std = l.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                    cur = (&cur - &l.running_mean) * &inv_std * &l.scale + &l.shift;
                    bn_i += 1;
                }
                LayerKind::Relu => {
                    cur.mapv_inplace(|v| v.max(0.0));
                }
                LayerKind::Dropout { .. } => {}
                LayerKind::ResidualBoundary => match skip.take() {
                    None => skip = Some(cur.clone()),
                    Some(s) => cur = cur + s,
                },
            }
        }
        Ok(cur)
    }
}
