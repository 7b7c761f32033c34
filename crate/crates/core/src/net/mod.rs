//! A small dense-network engine: linear layers, batch normalization, ReLU,
//! dropout, and residual skip connections, with hand-written gradients and an
//! Adam optimizer. Exactly enough machinery for the pose-lifting modules; no
//! general autodiff.

mod adam;
mod backward;
mod forward;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use backward::Gradients;
pub use forward::{DropoutMasks, ForwardTrace, Mode};

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Epsilon inside the batch-norm variance square root.
pub const BN_EPS: f64 = 1e-5;

/// One step in a layer chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Dense { in_dim: usize, out_dim: usize },
    BatchNorm { dim: usize },
    Relu,
    Dropout { rate: f64 },
    /// Residual skip marker. Boundaries pair up in sequence order: the first
    /// of a pair saves the running activation, the second adds it back.
    ResidualBoundary,
}

/// Shape of one network module, used to build the standard layer chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuleArch {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: usize,
    pub dropout_rate: f64,
    /// Ablation knob; the standard module keeps this on.
    pub batch_norm: bool,
}

impl ModuleArch {
    pub fn new(input_dim: usize, output_dim: usize, hidden: usize, dropout_rate: f64) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden,
            dropout_rate,
            batch_norm: true,
        }
    }

    pub fn without_batch_norm(mut self) -> Self {
        self.batch_norm = false;
        self
    }

    /// dense(in→H) → 2 × [boundary, 2 × (dense(H→H), BN, ReLU, dropout),
    /// boundary] → dense(H→out).
    pub fn layers(&self) -> Vec<LayerKind> {
        let h = self.hidden;
        let mut layers = vec![LayerKind::Dense {
            in_dim: self.input_dim,
            out_dim: h,
        }];
        for _ in 0..2 {
            layers.push(LayerKind::ResidualBoundary);
            for _ in 0..2 {
                layers.push(LayerKind::Dense { in_dim: h, out_dim: h });
                if self.batch_norm {
                    layers.push(LayerKind::BatchNorm { dim: h });
                }
                layers.push(LayerKind::Relu);
                layers.push(LayerKind::Dropout {
                    rate: self.dropout_rate,
                });
            }
            layers.push(LayerKind::ResidualBoundary);
        }
        layers.push(LayerKind::Dense {
            in_dim: h,
            out_dim: self.output_dim,
        });
        layers
    }
}

/// Weights and bias of one dense layer. `weight` is `in_dim × out_dim`,
/// applied as `y = x · W + b` on row-vector batches.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Learnable scale/shift plus running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

/// Architecture metadata carried with the parameters and embedded in
/// checkpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchMeta {
    pub input_dim: usize,
    pub output_dim: usize,
    pub arch_hash: u64,
}

/// All parameters of one network module: dense weights and biases plus
/// batch-norm scale, shift, and running statistics, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layers: Vec<LayerKind>,
    dense: Vec<DenseLayer>,
    batch_norm: Vec<BatchNormLayer>,
    meta: ArchMeta,
}

/// Build the standard two-residual-block module.
///
/// Weight matrices use He-uniform initialization, biases start at zero, and
/// batch-norm starts as the identity (scale 1, shift 0). The same seed always
/// yields bit-identical parameters.
pub fn build_module(
    input_dim: usize,
    output_dim: usize,
    hidden: usize,
    dropout_rate: f64,
    seed: u64,
) -> Result<NetworkParams> {
    build_module_custom(
        ModuleArch::new(input_dim, output_dim, hidden, dropout_rate),
        seed,
    )
}

/// [`build_module`] with the architecture knobs exposed.
pub fn build_module_custom(arch: ModuleArch, seed: u64) -> Result<NetworkParams> {
    if arch.input_dim == 0 || arch.output_dim == 0 || arch.hidden == 0 {
        return Err(Error::Architecture("dimensions must be positive".into()));
    }
    if !(0.0..1.0).contains(&arch.dropout_rate) {
        return Err(Error::Architecture(format!(
            "dropout rate {} outside [0, 1)",
            arch.dropout_rate
        )));
    }
    NetworkParams::from_layers(arch.layers(), seed)
}

impl NetworkParams {
    /// Build parameters for an arbitrary validated layer chain.
    pub fn from_layers(layers: Vec<LayerKind>, seed: u64) -> Result<Self> {
        let (input_dim, output_dim) = validate_layers(&layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dense = Vec::new();
        let mut batch_norm = Vec::new();
        for layer in &layers {
            match *layer {
                LayerKind::Dense { in_dim, out_dim } => {
                    // He-uniform: U(-limit, limit) with limit = sqrt(6 / fan_in).
                    let limit = (6.0 / in_dim as f64).sqrt();
                    let weight = Array2::from_shape_fn((in_dim, out_dim), |_| {
                        rng.random_range(-limit..limit)
                    });
                    dense.push(DenseLayer {
                        weight,
                        bias: Array1::zeros(out_dim),
                    });
                }
                LayerKind::BatchNorm { dim } => {
                    batch_norm.push(BatchNormLayer {
                        scale: Array1::ones(dim),
                        shift: Array1::zeros(dim),
                        running_mean: Array1::zeros(dim),
                        running_var: Array1::ones(dim),
                    });
                }
                _ => {}
            }
        }
        let meta = ArchMeta {
            input_dim,
            output_dim,
            arch_hash: arch_hash(&layers),
        };
        Ok(Self {
            layers,
            dense,
            batch_norm,
            meta,
        })
    }

    /// Reassemble from deserialized parts, revalidating every shape.
    pub fn from_parts(
        layers: Vec<LayerKind>,
        dense: Vec<DenseLayer>,
        batch_norm: Vec<BatchNormLayer>,
    ) -> Result<Self> {
        let (input_dim, output_dim) = validate_layers(&layers)?;
        let mut di = 0;
        let mut bi = 0;
        for layer in &layers {
            match *layer {
                LayerKind::Dense { in_dim, out_dim } => {
                    let d = dense.get(di).ok_or_else(|| {
                        Error::Architecture("missing dense layer parameters".into())
                    })?;
                    if d.weight.dim() != (in_dim, out_dim) || d.bias.len() != out_dim {
                        return Err(Error::Architecture(format!(
                            "dense layer {di} has shape {:?}, expected ({in_dim}, {out_dim})",
                            d.weight.dim()
                        )));
                    }
                    di += 1;
                }
                LayerKind::BatchNorm { dim } => {
                    let b = batch_norm.get(bi).ok_or_else(|| {
                        Error::Architecture("missing batch-norm layer parameters".into())
                    })?;
                    if b.scale.len() != dim
                        || b.shift.len() != dim
                        || b.running_mean.len() != dim
                        || b.running_var.len() != dim
                    {
                        return Err(Error::Architecture(format!(
                            "batch-norm layer {bi} has wrong width, expected {dim}"
                        )));
                    }
                    if b.running_var.iter().any(|&v| v <= 0.0) {
                        return Err(Error::Architecture(format!(
                            "batch-norm layer {bi} has non-positive running variance"
                        )));
                    }
                    bi += 1;
                }
                _ => {}
            }
        }
        if di != dense.len() || bi != batch_norm.len() {
            return Err(Error::Architecture(
                "parameter count does not match layer chain".into(),
            ));
        }
        let meta = ArchMeta {
            input_dim,
            output_dim,
            arch_hash: arch_hash(&layers),
        };
        Ok(Self {
            layers,
            dense,
            batch_norm,
            meta,
        })
    }

    pub fn layers(&self) -> &[LayerKind] {
        &self.layers
    }

    pub fn dense_layers(&self) -> &[DenseLayer] {
        &self.dense
    }

    pub fn batch_norm_layers(&self) -> &[BatchNormLayer] {
        &self.batch_norm
    }

    pub fn dense_layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.dense
    }

    pub fn batch_norm_layers_mut(&mut self) -> &mut [BatchNormLayer] {
        &mut self.batch_norm
    }

    pub fn meta(&self) -> ArchMeta {
        self.meta
    }

    pub fn input_dim(&self) -> usize {
        self.meta.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.meta.output_dim
    }

    /// Number of learnable scalars (excludes running statistics).
    pub fn learnable_count(&self) -> usize {
        let d: usize = self
            .dense
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum();
        let b: usize = self
            .batch_norm
            .iter()
            .map(|l| l.scale.len() + l.shift.len())
            .sum();
        d + b
    }

    /// Number of stored scalars including running statistics.
    pub fn stored_count(&self) -> usize {
        self.learnable_count()
            + self
                .batch_norm
                .iter()
                .map(|l| l.running_mean.len() + l.running_var.len())
                .sum::<usize>()
    }
}

/// Checks dimension chaining and residual pairing; returns (input, output) dims.
fn validate_layers(layers: &[LayerKind]) -> Result<(usize, usize)> {
    if layers.is_empty() {
        return Err(Error::Architecture("empty layer chain".into()));
    }
    let input_dim = match layers[0] {
        LayerKind::Dense { in_dim, .. } => in_dim,
        LayerKind::BatchNorm { dim } => dim,
        _ => {
            return Err(Error::Architecture(
                "chain must start with a dense or batch-norm layer".into(),
            ))
        }
    };
    let mut width = input_dim;
    let mut skip_width: Option<usize> = None;
    for (i, layer) in layers.iter().enumerate() {
        match *layer {
            LayerKind::Dense { in_dim, out_dim } => {
                if in_dim == 0 || out_dim == 0 {
                    return Err(Error::Architecture(format!(
                        "layer {i}: dense dimensions must be positive"
                    )));
                }
                if in_dim != width {
                    return Err(Error::Architecture(format!(
                        "layer {i}: dense expects width {in_dim}, chain carries {width}"
                    )));
                }
                width = out_dim;
            }
            LayerKind::BatchNorm { dim } => {
                if dim != width {
                    return Err(Error::Architecture(format!(
                        "layer {i}: batch-norm width {dim} does not match chain width {width}"
                    )));
                }
            }
            LayerKind::Relu => {}
            LayerKind::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Architecture(format!(
                        "layer {i}: dropout rate {rate} outside [0, 1)"
                    )));
                }
            }
            LayerKind::ResidualBoundary => match skip_width.take() {
                None => skip_width = Some(width),
                Some(w) => {
                    if w != width {
                        return Err(Error::Architecture(format!(
                            "layer {i}: residual block changes width {w} → {width}"
                        )));
                    }
                }
            },
        }
    }
    if skip_width.is_some() {
        return Err(Error::Architecture(
            "unmatched residual boundary at end of chain".into(),
        ));
    }
    Ok((input_dim, width))
}

/// FNV-1a over a canonical description of the layer chain.
fn arch_hash(layers: &[LayerKind]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    };
    for layer in layers {
        match *layer {
            LayerKind::Dense { in_dim, out_dim } => {
                eat(b"d");
                eat(&(in_dim as u64).to_le_bytes());
                eat(&(out_dim as u64).to_le_bytes());
            }
            LayerKind::BatchNorm { dim } => {
                eat(b"b");
                eat(&(dim as u64).to_le_bytes());
            }
            LayerKind::Relu => eat(b"r"),
            LayerKind::Dropout { rate } => {
                eat(b"o");
                eat(&rate.to_le_bytes());
            }
            LayerKind::ResidualBoundary => eat(b"s"),
        }
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_module_parameter_count_matches_closed_form() {
        let (input, output, h) = (34, 51, 1024);
        let params = build_module(input, output, h, 0.5, 42).unwrap();
        // Counted by hand off the layer list: an input dense, two blocks of
        // two (dense + batch-norm) each, and an output dense.
        let dense_in = input * h + h;
        let block = 2 * (h * h + h + 2 * h);
        let dense_out = h * output + output;
        let expected = dense_in + 2 * block + dense_out;
        assert_eq!(params.learnable_count(), expected);
        // Running stats add 2 more per batch-norm feature.
        assert_eq!(params.stored_count(), expected + 2 * 4 * h);
    }

    #[test]
    fn same_seed_builds_bit_identical_parameters() {
        let a = build_module(34, 51, 128, 0.5, 7).unwrap();
        let b = build_module(34, 51, 128, 0.5, 7).unwrap();
        assert_eq!(a, b);
        let c = build_module(34, 51, 128, 0.5, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn hidden_width_one_is_a_valid_degenerate_network() {
        let params = build_module(34, 51, 1, 0.5, 1).unwrap();
        let x = ndarray::Array2::zeros((3, 34));
        let y = params.forward_eval(&x).unwrap();
        assert_eq!(y.dim(), (3, 51));
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_zero_dims_and_bad_dropout() {
        assert!(build_module(0, 51, 8, 0.5, 1).is_err());
        assert!(build_module(34, 51, 8, 1.0, 1).is_err());
        assert!(build_module(34, 51, 8, -0.1, 1).is_err());
    }

    #[test]
    fn rejects_incompatible_chain() {
        let layers = vec![
            LayerKind::Dense { in_dim: 4, out_dim: 8 },
            LayerKind::Dense { in_dim: 4, out_dim: 8 },
        ];
        assert!(NetworkParams::from_layers(layers, 0).is_err());
    }

    #[test]
    fn rejects_width_changing_residual_block() {
        let layers = vec![
            LayerKind::ResidualBoundary,
            LayerKind::Dense { in_dim: 4, out_dim: 8 },
            LayerKind::ResidualBoundary,
        ];
        assert!(NetworkParams::from_layers(layers, 0).is_err());
    }

    #[test]
    fn rejects_unmatched_residual_boundary() {
        let layers = vec![
            LayerKind::Dense { in_dim: 4, out_dim: 4 },
            LayerKind::ResidualBoundary,
        ];
        assert!(NetworkParams::from_layers(layers, 0).is_err());
    }

    #[test]
    fn arch_hash_distinguishes_architectures() {
        let a = build_module(34, 51, 64, 0.5, 1).unwrap();
        let b = build_module(34, 51, 128, 0.5, 1).unwrap();
        assert_ne!(a.meta().arch_hash, b.meta().arch_hash);
        let c = build_module(34, 51, 64, 0.5, 99).unwrap();
        assert_eq!(a.meta().arch_hash, c.meta().arch_hash);
    }
}
