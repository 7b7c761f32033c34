//! Versioned binary checkpoint: magic string, config, topology, statistics,
//! then little-endian f64 parameter blocks in layer declaration order (for
//! each dense layer: row-major weight then bias; for each batch-norm layer:
//! scale, shift, running mean, running variance), followed by both Adam
//! states in the same order. A lossless JSON text export exists for
//! debugging.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::{ModelBundle, TrainConfig, TrainProgress};
use crate::error::{CheckpointError, Error, Result};
use crate::net::{AdamHyper, AdamState, BatchNormLayer, DenseLayer, LayerKind, NetworkParams};
use crate::skeleton::{NormalizationStats, SkeletonTopology};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PLIFTCK\n";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
    }

    fn f64_slice(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }

    fn array1(&mut self, a: &Array1<f64>) {
        self.f64_slice(a.as_slice().expect("standard layout"));
    }

    fn array2(&mut self, a: &Array2<f64>) {
        self.u64(a.nrows() as u64);
        self.u64(a.ncols() as u64);
        for &x in a.iter() {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint {
                path: self.path.clone(),
                kind: CheckpointError::Truncated {
                    what,
                    expected: self.pos + n - self.buf.len(),
                },
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn bytes(&mut self, what: &'static str) -> Result<&'a [u8]> {
        let n = self.u64(what)? as usize;
        self.take(n, what)
    }

    fn f64_vec(&mut self, what: &'static str) -> Result<Vec<f64>> {
        let n = self.u64(what)? as usize;
        let raw = self.take(n * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn array1(&mut self, what: &'static str) -> Result<Array1<f64>> {
        Ok(Array1::from(self.f64_vec(what)?))
    }

    fn array2(&mut self, what: &'static str) -> Result<Array2<f64>> {
        let rows = self.u64(what)? as usize;
        let cols = self.u64(what)? as usize;
        let raw = self.take(rows * cols * 8, what)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Array2::from_shape_vec((rows, cols), data).map_err(|_| Error::Checkpoint {
            path: self.path.clone(),
            kind: CheckpointError::Corrupt(what.into()),
        })
    }
}

fn write_layers(w: &mut Writer, layers: &[LayerKind]) {
    w.u64(layers.len() as u64);
    for layer in layers {
        match *layer {
            LayerKind::Dense { in_dim, out_dim } => {
                w.buf.push(b'd');
                w.u64(in_dim as u64);
                w.u64(out_dim as u64);
            }
            LayerKind::BatchNorm { dim } => {
                w.buf.push(b'b');
                w.u64(dim as u64);
            }
            LayerKind::Relu => w.buf.push(b'r'),
            LayerKind::Dropout { rate } => {
                w.buf.push(b'o');
                w.f64(rate);
            }
            LayerKind::ResidualBoundary => w.buf.push(b's'),
        }
    }
}

fn read_layers(r: &mut Reader) -> Result<Vec<LayerKind>> {
    let n = r.u64("layer count")? as usize;
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let tag = r.take(1, "layer tag")?[0];
        layers.push(match tag {
            b'd' => LayerKind::Dense {
                in_dim: r.u64("dense dims")? as usize,
                out_dim: r.u64("dense dims")? as usize,
            },
            b'b' => LayerKind::BatchNorm {
                dim: r.u64("batch-norm dim")? as usize,
            },
            b'r' => LayerKind::Relu,
            b'o' => LayerKind::Dropout {
                rate: r.f64("dropout rate")?,
            },
            b's' => LayerKind::ResidualBoundary,
            _ => {
                return Err(Error::Checkpoint {
                    path: r.path.clone(),
                    kind: CheckpointError::Corrupt("layer tag".into()),
                })
            }
        });
    }
    Ok(layers)
}

fn write_params(w: &mut Writer, params: &NetworkParams) {
    write_layers(w, params.layers());
    for d in params.dense_layers() {
        w.array2(&d.weight);
        w.array1(&d.bias);
    }
    for b in params.batch_norm_layers() {
        w.array1(&b.scale);
        w.array1(&b.shift);
        w.array1(&b.running_mean);
        w.array1(&b.running_var);
    }
}

fn read_params(r: &mut Reader) -> Result<NetworkParams> {
    let layers = read_layers(r)?;
    let n_dense = layers
        .iter()
        .filter(|l| matches!(l, LayerKind::Dense { .. }))
        .count();
    let n_bn = layers
        .iter()
        .filter(|l| matches!(l, LayerKind::BatchNorm { .. }))
        .count();
    let mut dense = Vec::with_capacity(n_dense);
    for _ in 0..n_dense {
        dense.push(DenseLayer {
            weight: r.array2("dense weight")?,
            bias: r.array1("dense bias")?,
        });
    }
    let mut batch_norm = Vec::with_capacity(n_bn);
    for _ in 0..n_bn {
        batch_norm.push(BatchNormLayer {
            scale: r.array1("batch-norm scale")?,
            shift: r.array1("batch-norm shift")?,
            running_mean: r.array1("batch-norm running mean")?,
            running_var: r.array1("batch-norm running variance")?,
        });
    }
    NetworkParams::from_parts(layers, dense, batch_norm)
}

fn write_adam(w: &mut Writer, state: &AdamState) {
    w.u64(state.step);
    w.f64(state.hyper.learning_rate);
    w.f64(state.hyper.beta1);
    w.f64(state.hyper.beta2);
    w.f64(state.hyper.epsilon);
    for (m, v) in state.m_dense.iter().zip(&state.v_dense) {
        w.array2(&m.0);
        w.array1(&m.1);
        w.array2(&v.0);
        w.array1(&v.1);
    }
    for (m, v) in state.m_bn.iter().zip(&state.v_bn) {
        w.array1(&m.0);
        w.array1(&m.1);
        w.array1(&v.0);
        w.array1(&v.1);
    }
}

fn read_adam(r: &mut Reader, params: &NetworkParams) -> Result<AdamState> {
    let step = r.u64("adam step")?;
    let hyper = AdamHyper {
        learning_rate: r.f64("adam lr")?,
        beta1: r.f64("adam beta1")?,
        beta2: r.f64("adam beta2")?,
        epsilon: r.f64("adam epsilon")?,
    };
    let mut state = AdamState::new(params, hyper);
    state.step = step;
    for i in 0..params.dense_layers().len() {
        state.m_dense[i].0 = r.array2("adam dense m")?;
        state.m_dense[i].1 = r.array1("adam dense m bias")?;
        state.v_dense[i].0 = r.array2("adam dense v")?;
        state.v_dense[i].1 = r.array1("adam dense v bias")?;
    }
    for i in 0..params.batch_norm_layers().len() {
        state.m_bn[i].0 = r.array1("adam bn m scale")?;
        state.m_bn[i].1 = r.array1("adam bn m shift")?;
        state.v_bn[i].0 = r.array1("adam bn v scale")?;
        state.v_bn[i].1 = r.array1("adam bn v shift")?;
    }
    for (i, d) in params.dense_layers().iter().enumerate() {
        if state.m_dense[i].0.dim() != d.weight.dim() || state.v_dense[i].0.dim() != d.weight.dim()
        {
            return Err(Error::Checkpoint {
                path: r.path.clone(),
                kind: CheckpointError::Corrupt(format!("adam state for dense layer {i}")),
            });
        }
    }
    Ok(state)
}

fn write_stats(w: &mut Writer, stats: &NormalizationStats) {
    w.f64_slice(&stats.mean);
    w.f64_slice(&stats.std);
}

fn read_stats(r: &mut Reader) -> Result<NormalizationStats> {
    Ok(NormalizationStats {
        mean: r.f64_vec("stats mean")?,
        std: r.f64_vec("stats std")?,
    })
}

/// Serialize a bundle to its on-disk form.
pub fn checkpoint_bytes(bundle: &ModelBundle) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    let config_json = serde_json::to_string(&bundle.config).expect("config serializes");
    w.bytes(config_json.as_bytes());
    w.u64(bundle.config.hash());
    w.u64(bundle.progress.phase1_done as u64);
    w.u64(bundle.progress.phase2_done as u64);
    w.u64(bundle.progress.joint_done as u64);
    w.bytes(bundle.topology.to_text().as_bytes());
    write_stats(&mut w, &bundle.stats2d);
    write_stats(&mut w, &bundle.stats3d);
    write_params(&mut w, &bundle.lifter);
    write_adam(&mut w, &bundle.lifter_opt);
    write_params(&mut w, &bundle.reprojector);
    write_adam(&mut w, &bundle.reprojector_opt);
    w.buf.extend_from_slice(b"END\n");
    w.buf
}

pub fn save_checkpoint(bundle: &ModelBundle, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(bundle)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelBundle> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    bundle_from_bytes(&buf, &path.display().to_string())
}

pub fn bundle_from_bytes(buf: &[u8], path: &str) -> Result<ModelBundle> {
    let mut r = Reader {
        buf,
        pos: 0,
        path: path.to_string(),
    };
    let magic = r.take(CHECKPOINT_MAGIC.len(), "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint {
            path: r.path.clone(),
            kind: CheckpointError::BadMagic,
        });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint {
            path: r.path.clone(),
            kind: CheckpointError::Version {
                got: version,
                supported: CHECKPOINT_VERSION,
            },
        });
    }
    let config_json = r.bytes("config")?.to_vec();
    let config: TrainConfig =
        serde_json::from_slice(&config_json).map_err(|e| Error::Checkpoint {
            path: r.path.clone(),
            kind: CheckpointError::Corrupt(format!("config: {e}")),
        })?;
    let stored_hash = r.u64("config hash")?;
    if stored_hash != config.hash() {
        return Err(Error::Checkpoint {
            path: r.path.clone(),
            kind: CheckpointError::Corrupt("config hash".into()),
        });
    }
    let progress = TrainProgress {
        phase1_done: r.u64("progress")? as usize,
        phase2_done: r.u64("progress")? as usize,
        joint_done: r.u64("progress")? as usize,
    };
    let topo_text = String::from_utf8(r.bytes("topology")?.to_vec()).map_err(|_| {
        Error::Checkpoint {
            path: r.path.clone(),
            kind: CheckpointError::Corrupt("topology text".into()),
        }
    })?;
    let topology = SkeletonTopology::from_text(&topo_text)?;
    let stats2d = read_stats(&mut r)?;
    let stats3d = read_stats(&mut r)?;
    let lifter = read_params(&mut r)?;
    let lifter_opt = read_adam(&mut r, &lifter)?;
    let reprojector = read_params(&mut r)?;
    let reprojector_opt = read_adam(&mut r, &reprojector)?;
    let end = r.take(4, "end marker")?;
    if end != b"END\n" || r.pos != buf.len() {
        return Err(Error::Checkpoint {
            path: r.path.clone(),
            kind: CheckpointError::Corrupt("trailing data".into()),
        });
    }
    Ok(ModelBundle {
        topology,
        lifter,
        reprojector,
        lifter_opt,
        reprojector_opt,
        stats2d,
        stats3d,
        config,
        progress,
    })
}

/// Lossless JSON rendering of the full bundle for debugging; every f64 is
/// printed with round-trip precision.
pub fn checkpoint_text(bundle: &ModelBundle) -> String {
    fn params_json(p: &NetworkParams) -> serde_json::Value {
        serde_json::json!({
            "layers": p.layers().iter().map(|l| format!("{l:?}")).collect::<Vec<_>>(),
            "dense": p.dense_layers().iter().map(|d| serde_json::json!({
                "weight_rows": d.weight.nrows(),
                "weight": d.weight.iter().copied().collect::<Vec<f64>>(),
                "bias": d.bias.to_vec(),
            })).collect::<Vec<_>>(),
            "batch_norm": p.batch_norm_layers().iter().map(|b| serde_json::json!({
                "scale": b.scale.to_vec(),
                "shift": b.shift.to_vec(),
                "running_mean": b.running_mean.to_vec(),
                "running_var": b.running_var.to_vec(),
            })).collect::<Vec<_>>(),
        })
    }
    let value = serde_json::json!({
        "format": "poselift-checkpoint-text",
        "version": CHECKPOINT_VERSION,
        "config": &bundle.config,
        "progress": &bundle.progress,
        "topology": bundle.topology.to_text(),
        "stats2d": &bundle.stats2d,
        "stats3d": &bundle.stats3d,
        "lifter": params_json(&bundle.lifter),
        "reprojector": params_json(&bundle.reprojector),
        "lifter_adam_step": bundle.lifter_opt.step,
        "reprojector_adam_step": bundle.reprojector_opt.step,
    });
    serde_json::to_string_pretty(&value).expect("bundle serializes")
}
