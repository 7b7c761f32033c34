//! Three-phase training orchestration: supervised lifter pretraining,
//! re-projector pretraining on ground-truth 3d, and joint fine-tuning where
//! the re-projector consumes the lifter's predictions and gradients flow
//! through both modules. Every source of randomness is derived from the
//! config seed, keyed by phase and epoch, so runs are bit-reproducible and
//! resume exactly at epoch boundaries.

mod checkpoint;
mod logging;

pub use checkpoint::{
    bundle_from_bytes, checkpoint_bytes, checkpoint_text, load_checkpoint, save_checkpoint,
    CHECKPOINT_VERSION,
};
pub use logging::{read_log, EpochLog, SourceLog, TrainLog};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{make_index_batches, Sample};
use crate::error::{Error, Result};
use crate::losses::{squared_error, symmetry_loss_flat, total_loss, LossReport, LossWeights};
use crate::net::{
    adam_step, build_module_custom, AdamHyper, AdamState, DropoutMasks, Gradients, ModuleArch,
    NetworkParams,
};
use crate::skeleton::{Frame, NormalizationStats, Pose2D, Pose3D, SkeletonTopology};

/// Hyperparameters and schedule for a full training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub joint_epochs: usize,
    pub hidden: usize,
    pub dropout_rate: f64,
    pub bn_momentum: f64,
    pub seed: u64,
    /// Per-source mix inside each joint-phase batch, e.g. `[1, 1]`.
    pub mix_ratio: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            learning_rate: 1e-4,
            batch_size: 64,
            phase1_epochs: 50,
            phase2_epochs: 50,
            joint_epochs: 100,
            hidden: 1024,
            dropout_rate: 0.5,
            bn_momentum: 0.1,
            seed: 0,
            mix_ratio: vec![1, 1],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        LossWeights::new(self.weights.alpha, self.weights.beta, self.weights.gamma)?;
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch size must be at least 2 (batch-norm needs batch statistics)".into(),
            ));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(Error::Config(format!(
                "batch-norm momentum {} outside (0, 1]",
                self.bn_momentum
            )));
        }
        if self.mix_ratio.is_empty() || self.mix_ratio.iter().any(|&r| r == 0) {
            return Err(Error::Config("mix ratio entries must be positive".into()));
        }
        Ok(())
    }

    /// FNV-1a over the canonical JSON form; stored in checkpoints for resume
    /// compatibility checks.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hash: u64 = 0xcbf29ce484222325;
        for b in json.bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        hash
    }

    /// A resumed run must match everything except the phase lengths, which
    /// may be extended.
    pub fn compatible_for_resume(&self, other: &Self) -> Result<()> {
        let mut a = self.clone();
        let mut b = other.clone();
        a.phase1_epochs = 0;
        a.phase2_epochs = 0;
        a.joint_epochs = 0;
        b.phase1_epochs = 0;
        b.phase2_epochs = 0;
        b.joint_epochs = 0;
        if a != b {
            return Err(Error::Config(
                "checkpoint was trained with different hyperparameters; only the epoch \
                 targets may change on resume"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// splitmix64-based derivation of per-purpose seeds from the config seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts.iter().chain(std::iter::once(&0x9e3779b97f4a7c15)) {
        z = z.wrapping_add(p).wrapping_add(0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
    }
    z
}

const SEED_LIFTER_INIT: u64 = 1;
const SEED_REPROJ_INIT: u64 = 2;
const SEED_PHASE1: u64 = 10;
const SEED_PHASE2: u64 = 11;
const SEED_JOINT: u64 = 12;
const SEED_SHUFFLE: u64 = 100;
const SEED_MASKS: u64 = 101;

/// A named list of samples; the name keys the per-source log breakdown.
#[derive(Debug, Clone)]
pub struct DataSource {
    pub name: String,
    pub samples: Vec<Sample>,
}

/// How many epochs of each phase a bundle has absorbed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainProgress {
    pub phase1_done: usize,
    pub phase2_done: usize,
    pub joint_done: usize,
}

/// Everything a trained model carries: both network modules, their optimizer
/// states, the normalization statistics fitted on the training split, the
/// topology, and training provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub topology: SkeletonTopology,
    pub lifter: NetworkParams,
    pub reprojector: NetworkParams,
    pub lifter_opt: AdamState,
    pub reprojector_opt: AdamState,
    pub stats2d: NormalizationStats,
    pub stats3d: NormalizationStats,
    pub config: TrainConfig,
    pub progress: TrainProgress,
}

impl ModelBundle {
    /// Build fresh modules and fit normalization statistics on the
    /// (fully 3d-annotated) training split.
    pub fn init(
        topology: SkeletonTopology,
        config: TrainConfig,
        train_data: &[Sample],
    ) -> Result<Self> {
        Self::init_custom(topology, config, train_data, true)
    }

    /// [`ModelBundle::init`] with batch normalization optionally disabled in
    /// both modules (ablation support).
    pub fn init_custom(
        topology: SkeletonTopology,
        config: TrainConfig,
        train_data: &[Sample],
        batch_norm: bool,
    ) -> Result<Self> {
        config.validate()?;
        if train_data.is_empty() {
            return Err(Error::EmptyInput { op: "ModelBundle::init" });
        }
        let mut centered2d = Vec::with_capacity(train_data.len());
        let mut centered3d = Vec::with_capacity(train_data.len());
        for (i, s) in train_data.iter().enumerate() {
            let y3d = s.y3d.as_ref().ok_or_else(|| Error::Invalid {
                op: "ModelBundle::init",
                msg: format!("sample {i} lacks 3d ground truth; statistics need a 3d split"),
            })?;
            centered2d.push(center_2d(&s.y2d, &topology)?);
            centered3d.push(center_3d(y3d, &topology)?);
        }
        let stats2d = NormalizationStats::fit_2d(&centered2d)?;
        let stats3d = NormalizationStats::fit_3d(&centered3d)?;

        let j = topology.joint_count();
        let lifter_arch = ModuleArch {
            input_dim: 2 * j,
            output_dim: 3 * j,
            hidden: config.hidden,
            dropout_rate: config.dropout_rate,
            batch_norm,
        };
        let reproj_arch = ModuleArch {
            input_dim: 3 * j,
            output_dim: 2 * j,
            hidden: config.hidden,
            dropout_rate: config.dropout_rate,
            batch_norm,
        };
        let lifter =
            build_module_custom(lifter_arch, derive_seed(config.seed, &[SEED_LIFTER_INIT]))?;
        let reprojector =
            build_module_custom(reproj_arch, derive_seed(config.seed, &[SEED_REPROJ_INIT]))?;
        let hyper = AdamHyper::with_learning_rate(config.learning_rate);
        let lifter_opt = AdamState::new(&lifter, hyper);
        let reprojector_opt = AdamState::new(&reprojector, hyper);
        Ok(Self {
            topology,
            lifter,
            reprojector,
            lifter_opt,
            reprojector_opt,
            stats2d,
            stats3d,
            config,
            progress: TrainProgress::default(),
        })
    }

    pub fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }

    /// Run a 2d pose through the lifter and the learned re-projector in eval
    /// mode. Returns the root-relative 3d prediction in millimeters and the
    /// re-projected 2d pose (root-centered pixels). Joints marked invisible
    /// are mean-filled in normalized space; the root must be visible.
    pub fn predict(
        &self,
        y2d: &Pose2D,
        visibility: Option<&[bool]>,
    ) -> Result<(Pose3D, Pose2D)> {
        let topo = &self.topology;
        if let Some(vis) = visibility {
            if vis.len() != topo.joint_count() {
                return Err(Error::JointCountMismatch {
                    op: "predict",
                    expected: topo.joint_count(),
                    got: vis.len(),
                });
            }
            if !vis[topo.root_index()] {
                return Err(Error::Invalid {
                    op: "predict",
                    msg: "root joint must be visible to root-center the input".into(),
                });
            }
        }
        let centered = center_2d(y2d, topo)?;
        let mut row = centered.normalize(&self.stats2d)?.flatten();
        if let Some(vis) = visibility {
            for (j, &v) in vis.iter().enumerate() {
                if !v {
                    row[2 * j] = 0.0;
                    row[2 * j + 1] = 0.0;
                }
            }
        }
        let x = Array2::from_shape_vec((1, row.len()), row).expect("row shape");
        let p3n = self.lifter.forward_eval(&x)?;
        let r2n = self.reprojector.forward_eval(&p3n)?;

        let p3 = denorm_row_3d(&p3n, 0, &self.stats3d);
        let pose3 = Pose3D::from_flat(&p3, Frame::Raw)?.root_center(topo)?;
        let r2 = denorm_row_2d(&r2n, 0, &self.stats2d);
        let pose2 = Pose2D::from_flat(&r2, Frame::Raw)?.root_center(topo)?;
        Ok((pose3, pose2))
    }
}

fn center_2d(pose: &Pose2D, topo: &SkeletonTopology) -> Result<Pose2D> {
    match pose.frame() {
        Frame::Raw => pose.root_center(topo),
        Frame::RootCentered => {
            pose.check_topology("prepare", topo)?;
            Ok(pose.clone())
        }
        Frame::Normalized => Err(Error::FrameMismatch {
            op: "prepare",
            expected: "raw or root_centered",
            got: pose.frame(),
        }),
    }
}

fn center_3d(pose: &Pose3D, topo: &SkeletonTopology) -> Result<Pose3D> {
    match pose.frame() {
        Frame::Raw => pose.root_center(topo),
        Frame::RootCentered => {
            pose.check_topology("prepare", topo)?;
            Ok(pose.clone())
        }
        Frame::Normalized => Err(Error::FrameMismatch {
            op: "prepare",
            expected: "raw or root_centered",
            got: pose.frame(),
        }),
    }
}

fn denorm_row_3d(m: &Array2<f64>, row: usize, stats: &NormalizationStats) -> Vec<f64> {
    (0..m.ncols())
        .map(|d| m[[row, d]] * stats.std[d] + stats.mean[d])
        .collect()
}

fn denorm_row_2d(m: &Array2<f64>, row: usize, stats: &NormalizationStats) -> Vec<f64> {
    denorm_row_3d(m, row, stats)
}

/// One sample, preprocessed into the flat vectors training needs. The
/// network consumes, emits, and is trained against normalized coordinates.
#[derive(Debug, Clone)]
struct Prepared {
    x2d: Vec<f64>,
    t2d: Vec<f64>,
    vis: Option<Vec<bool>>,
    t3d: Option<Vec<f64>>,
}

fn prepare_samples(
    samples: &[Sample],
    topo: &SkeletonTopology,
    stats2d: &NormalizationStats,
    stats3d: &NormalizationStats,
) -> Result<Vec<Prepared>> {
    let mut out = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.visibility.len() != topo.joint_count() {
            return Err(Error::JointCountMismatch {
                op: "prepare",
                expected: topo.joint_count(),
                got: s.visibility.len(),
            });
        }
        let root_visible = s.visibility[topo.root_index()];
        if !root_visible {
            return Err(Error::Invalid {
                op: "prepare",
                msg: format!("sample {i}: root joint is masked invisible"),
            });
        }
        let centered = center_2d(&s.y2d, topo)?;
        let t2d = centered.normalize(stats2d)?.flatten();
        let all_visible = s.visibility.iter().all(|&v| v);
        let mut x2d = t2d.clone();
        if !all_visible {
            for (j, &v) in s.visibility.iter().enumerate() {
                if !v {
                    x2d[2 * j] = 0.0;
                    x2d[2 * j + 1] = 0.0;
                }
            }
        }
        let t3d = match &s.y3d {
            None => None,
            Some(p) => Some(center_3d(p, topo)?.normalize(stats3d)?.flatten()),
        };
        out.push(Prepared {
            x2d,
            t2d,
            vis: if all_visible {
                None
            } else {
                Some(s.visibility.clone())
            },
            t3d,
        });
    }
    Ok(out)
}

/// One assembled training batch for the joint objective. Everything is in
/// the normalized coordinate space the networks operate in.
pub struct JointBatch {
    /// Lifter input: normalized root-centered 2d, invisible joints zeroed.
    pub x2d: Array2<f64>,
    /// Re-projection target: normalized root-centered 2d.
    pub t2d: Array2<f64>,
    /// Per-coordinate visibility mask for the 2d loss; `None` = all visible.
    pub mask2d: Option<Array2<f64>>,
    /// Normalized 3d targets; rows without ground truth are zero-filled and
    /// excluded via `has3d`.
    pub t3d: Array2<f64>,
    pub has3d: Vec<bool>,
}

impl JointBatch {
    pub fn batch_size(&self) -> usize {
        self.x2d.nrows()
    }

    fn mask3d(&self) -> Option<Array2<f64>> {
        if self.has3d.iter().all(|&h| h) {
            return None;
        }
        let mut m = Array2::zeros(self.t3d.dim());
        for (i, &h) in self.has3d.iter().enumerate() {
            if h {
                m.row_mut(i).fill(1.0);
            }
        }
        Some(m)
    }
}

fn gather_batch(
    prepared: &[Vec<Prepared>],
    picks: &[(usize, usize)],
    topo: &SkeletonTopology,
) -> JointBatch {
    let j = topo.joint_count();
    let b = picks.len();
    let mut x2d = Array2::zeros((b, 2 * j));
    let mut t2d = Array2::zeros((b, 2 * j));
    let mut t3d = Array2::zeros((b, 3 * j));
    let mut has3d = vec![false; b];
    let mut any_masked = false;
    for (row, &(s, i)) in picks.iter().enumerate() {
        let p = &prepared[s][i];
        for (d, v) in p.x2d.iter().enumerate() {
            x2d[[row, d]] = *v;
        }
        for (d, v) in p.t2d.iter().enumerate() {
            t2d[[row, d]] = *v;
        }
        if let Some(t) = &p.t3d {
            for (d, v) in t.iter().enumerate() {
                t3d[[row, d]] = *v;
            }
            has3d[row] = true;
        }
        if p.vis.is_some() {
            any_masked = true;
        }
    }
    let mask2d = if any_masked {
        let mut m = Array2::ones((b, 2 * j));
        for (row, &(s, i)) in picks.iter().enumerate() {
            if let Some(vis) = &prepared[s][i].vis {
                for (jj, &v) in vis.iter().enumerate() {
                    if !v {
                        m[[row, 2 * jj]] = 0.0;
                        m[[row, 2 * jj + 1]] = 0.0;
                    }
                }
            }
        }
        Some(m)
    } else {
        None
    };
    JointBatch {
        x2d,
        t2d,
        mask2d,
        t3d,
        has3d,
    }
}

/// Per-sample loss decomposition of one joint step; 2d-only rows carry an
/// exactly-zero supervised component.
pub struct JointStepOutput {
    pub report: LossReport,
    pub per_sample_l3d: Vec<f64>,
    pub per_sample_l2d: Vec<f64>,
    pub per_sample_lsymm: Vec<f64>,
}

/// Forward both modules on one batch, evaluate the combined objective, and
/// backpropagate through the re-projector into the lifter. Pass
/// `bn_momentum = None` to freeze running statistics (gradient checking).
///
/// All three loss terms are evaluated in the normalized coordinate space the
/// networks operate in, which keeps them on commensurate scales under the
/// published weights; the symmetry term chains through the denormalization
/// so the lengths it compares are metric millimeters.
#[allow(clippy::too_many_arguments)]
pub fn joint_step(
    lifter: &mut NetworkParams,
    reprojector: &mut NetworkParams,
    batch: &JointBatch,
    weights: &LossWeights,
    stats3d: &NormalizationStats,
    topo: &SkeletonTopology,
    bn_momentum: Option<f64>,
    masks_lifter: &DropoutMasks,
    masks_reproj: &DropoutMasks,
) -> Result<(JointStepOutput, Gradients, Gradients)> {
    let (p3n, trace_l) = lifter.forward_train_masked(&batch.x2d, masks_lifter, bn_momentum)?;
    let (r2n, trace_r) = reprojector.forward_train_masked(&p3n, masks_reproj, bn_momentum)?;

    let mask3d = batch.mask3d();
    let sup = squared_error(&p3n, &batch.t3d, mask3d.as_ref())?;
    let rep = squared_error(&r2n, &batch.t2d, batch.mask2d.as_ref())?;

    // Symmetry is measured on the denormalized (metric) prediction, scaled
    // into the normalized objective by the mean squared 3d deviation so the
    // prior stays a prior; the gradient chains through the affine map.
    let std3 = Array1::from(stats3d.std.clone());
    let mean3 = Array1::from(stats3d.mean.clone());
    let scale = symmetry_scale(stats3d);
    let p3mm = &p3n * &std3 + &mean3;
    let symm_mm = symmetry_loss_flat(&p3mm, topo)?;
    let symm_value = symm_mm.value / scale;
    let symm_grad_n = &symm_mm.grad * &std3 / scale;
    let symm_per_sample: Vec<f64> = symm_mm.per_sample.iter().map(|v| v / scale).collect();

    let report = total_loss(
        sup.value,
        rep.value,
        symm_value,
        weights,
        true,
        batch.batch_size(),
    )?;
    if !report.total.is_finite() {
        return Err(Error::NonFinite {
            op: "joint_step",
            what: "total loss".into(),
        });
    }

    let (grads_r, d_p3n_reproj) = reprojector.backward(trace_r, &(&rep.grad * weights.beta))?;
    let g3 = &sup.grad * weights.alpha + &symm_grad_n * weights.gamma + d_p3n_reproj;
    let (grads_l, _) = lifter.backward(trace_l, &g3)?;

    Ok((
        JointStepOutput {
            report,
            per_sample_l3d: sup.per_sample,
            per_sample_l2d: rep.per_sample,
            per_sample_lsymm: symm_per_sample,
        },
        grads_l,
        grads_r,
    ))
}

/// Millimeter²-to-normalized conversion for the symmetry term: the mean 3d
/// coordinate variance of the training split. Dividing by it expresses the
/// squared length asymmetries in the same dimensionless units as the other
/// two losses.
pub fn symmetry_scale(stats3d: &NormalizationStats) -> f64 {
    let n = stats3d.std.len().max(1) as f64;
    stats3d.std.iter().map(|s| s * s).sum::<f64>() / n
}

/// The combined objective as a pure function of the two parameter sets, with
/// frozen dropout masks. The finite-difference side of the gradient checks.
#[allow(clippy::too_many_arguments)]
pub fn joint_objective(
    lifter: &NetworkParams,
    reprojector: &NetworkParams,
    batch: &JointBatch,
    weights: &LossWeights,
    stats3d: &NormalizationStats,
    topo: &SkeletonTopology,
    masks_lifter: &DropoutMasks,
    masks_reproj: &DropoutMasks,
) -> Result<f64> {
    let p3n = lifter.forward_train_frozen(&batch.x2d, masks_lifter)?;
    let r2n = reprojector.forward_train_frozen(&p3n, masks_reproj)?;
    let sup = squared_error(&p3n, &batch.t3d, batch.mask3d().as_ref())?;
    let rep = squared_error(&r2n, &batch.t2d, batch.mask2d.as_ref())?;
    let std3 = Array1::from(stats3d.std.clone());
    let mean3 = Array1::from(stats3d.mean.clone());
    let symm = symmetry_loss_flat(&(&p3n * &std3 + &mean3), topo)?;
    Ok(total_loss(
        sup.value,
        rep.value,
        symm.value / symmetry_scale(stats3d),
        weights,
        true,
        batch.batch_size(),
    )?
    .total)
}

struct EpochAccumulator {
    sums: std::collections::BTreeMap<String, (usize, f64, f64, f64)>,
    samples: usize,
    l3d: f64,
    l2d: f64,
    lsymm: f64,
    batches: usize,
}

impl EpochAccumulator {
    fn new() -> Self {
        Self {
            sums: std::collections::BTreeMap::new(),
            samples: 0,
            l3d: 0.0,
            l2d: 0.0,
            lsymm: 0.0,
            batches: 0,
        }
    }

    fn add(
        &mut self,
        picks: &[(usize, usize)],
        names: &[String],
        l3d: &[f64],
        l2d: &[f64],
        lsymm: &[f64],
    ) {
        self.batches += 1;
        for (row, &(s, _)) in picks.iter().enumerate() {
            let entry = self
                .sums
                .entry(names[s].clone())
                .or_insert((0, 0.0, 0.0, 0.0));
            entry.0 += 1;
            entry.1 += l3d[row];
            entry.2 += l2d[row];
            entry.3 += lsymm[row];
            self.samples += 1;
            self.l3d += l3d[row];
            self.l2d += l2d[row];
            self.lsymm += lsymm[row];
        }
    }

    fn finish(
        self,
        phase: &str,
        epoch: usize,
        weights: LossWeights,
        wall_ms: u64,
    ) -> EpochLog {
        let n = self.samples.max(1) as f64;
        let l3d = self.l3d / n;
        let l2d = self.l2d / n;
        let lsymm = self.lsymm / n;
        EpochLog {
            phase: phase.into(),
            epoch,
            batches: self.batches,
            weights,
            l3d,
            l2d,
            lsymm,
            total: weights.alpha * l3d + weights.beta * l2d + weights.gamma * lsymm,
            per_source: self
                .sums
                .into_iter()
                .map(|(source, (count, a, b, c))| SourceLog {
                    source,
                    samples: count,
                    l3d: a / count as f64,
                    l2d: b / count as f64,
                    lsymm: c / count as f64,
                })
                .collect(),
            wall_ms,
        }
    }
}

fn require_all_3d(op: &'static str, data: &[Sample]) -> Result<()> {
    if let Some(i) = data.iter().position(|s| s.y3d.is_none()) {
        return Err(Error::Invalid {
            op,
            msg: format!("sample {i} has no 3d ground truth; this phase is fully supervised"),
        });
    }
    Ok(())
}

fn check_batchable(op: &'static str, n: usize, batch_size: usize, epochs_left: usize) -> Result<()> {
    if epochs_left > 0 && n < batch_size {
        return Err(Error::Config(format!(
            "{op}: {n} samples cannot fill one batch of {batch_size}"
        )));
    }
    Ok(())
}

/// Phase 1: supervised pretraining of the 2d→3d lifter on (y2d, y3d) pairs.
/// Runs from the bundle's progress counter up to `config.phase1_epochs`.
pub fn train_phase_lifter(
    bundle: &mut ModelBundle,
    data: &[Sample],
    log: &mut TrainLog,
) -> Result<()> {
    require_all_3d("train_phase_lifter", data)?;
    let target = bundle.config.phase1_epochs;
    let done = bundle.progress.phase1_done;
    check_batchable(
        "train_phase_lifter",
        data.len(),
        bundle.config.batch_size,
        target.saturating_sub(done),
    )?;
    let prepared = vec![prepare_samples(
        data,
        &bundle.topology,
        &bundle.stats2d,
        &bundle.stats3d,
    )?];
    let names = vec!["train".to_string()];
    let phase_weights = LossWeights {
        alpha: 1.0,
        beta: 0.0,
        gamma: 0.0,
    };

    for epoch in done..target {
        let started = std::time::Instant::now();
        let shuffle_seed = derive_seed(
            bundle.config.seed,
            &[SEED_PHASE1, SEED_SHUFFLE, epoch as u64],
        );
        let batches = make_index_batches(
            &[prepared[0].len()],
            &[1],
            bundle.config.batch_size,
            shuffle_seed,
        )?;
        let mut mask_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            bundle.config.seed,
            &[SEED_PHASE1, SEED_MASKS, epoch as u64],
        ));
        let mut acc = EpochAccumulator::new();
        for (step, picks) in batches.iter().enumerate() {
            let batch = gather_batch(&prepared, picks, &bundle.topology);
            let masks = bundle
                .lifter
                .draw_dropout_masks(batch.batch_size(), &mut mask_rng);
            let (p3n, trace) = bundle.lifter.forward_train_masked(
                &batch.x2d,
                &masks,
                Some(bundle.config.bn_momentum),
            )?;
            let sup = squared_error(&p3n, &batch.t3d, None)?;
            if !sup.value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    phase: "lifter_pretrain",
                    epoch,
                    step,
                });
            }
            let (grads, _) = bundle.lifter.backward(trace, &sup.grad)?;
            adam_step(&mut bundle.lifter, &grads, &mut bundle.lifter_opt)?;
            let zeros = vec![0.0; picks.len()];
            acc.add(picks, &names, &sup.per_sample, &zeros, &zeros);
        }
        bundle.progress.phase1_done = epoch + 1;
        log.push(acc.finish(
            "lifter_pretrain",
            epoch,
            phase_weights,
            started.elapsed().as_millis() as u64,
        ))?;
    }
    Ok(())
}

/// Phase 2: pretrain the 3d→2d re-projector on ground-truth 3d inputs.
pub fn train_phase_reprojector(
    bundle: &mut ModelBundle,
    data: &[Sample],
    log: &mut TrainLog,
) -> Result<()> {
    require_all_3d("train_phase_reprojector", data)?;
    let target = bundle.config.phase2_epochs;
    let done = bundle.progress.phase2_done;
    check_batchable(
        "train_phase_reprojector",
        data.len(),
        bundle.config.batch_size,
        target.saturating_sub(done),
    )?;
    let prepared = vec![prepare_samples(
        data,
        &bundle.topology,
        &bundle.stats2d,
        &bundle.stats3d,
    )?];
    let names = vec!["train".to_string()];
    let phase_weights = LossWeights {
        alpha: 0.0,
        beta: 1.0,
        gamma: 0.0,
    };

    for epoch in done..target {
        let started = std::time::Instant::now();
        let shuffle_seed = derive_seed(
            bundle.config.seed,
            &[SEED_PHASE2, SEED_SHUFFLE, epoch as u64],
        );
        let batches = make_index_batches(
            &[prepared[0].len()],
            &[1],
            bundle.config.batch_size,
            shuffle_seed,
        )?;
        let mut mask_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            bundle.config.seed,
            &[SEED_PHASE2, SEED_MASKS, epoch as u64],
        ));
        let mut acc = EpochAccumulator::new();
        for (step, picks) in batches.iter().enumerate() {
            let batch = gather_batch(&prepared, picks, &bundle.topology);
            let masks = bundle
                .reprojector
                .draw_dropout_masks(batch.batch_size(), &mut mask_rng);
            let (r2n, trace) = bundle.reprojector.forward_train_masked(
                &batch.t3d,
                &masks,
                Some(bundle.config.bn_momentum),
            )?;
            let rep = squared_error(&r2n, &batch.t2d, batch.mask2d.as_ref())?;
            if !rep.value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    phase: "reprojector_pretrain",
                    epoch,
                    step,
                });
            }
            let (grads, _) = bundle.reprojector.backward(trace, &rep.grad)?;
            adam_step(
                &mut bundle.reprojector,
                &grads,
                &mut bundle.reprojector_opt,
            )?;
            let zeros = vec![0.0; picks.len()];
            acc.add(picks, &names, &zeros, &rep.per_sample, &zeros);
        }
        bundle.progress.phase2_done = epoch + 1;
        log.push(acc.finish(
            "reprojector_pretrain",
            epoch,
            phase_weights,
            started.elapsed().as_millis() as u64,
        ))?;
    }
    Ok(())
}

/// Phase 3: fine-tune both modules simultaneously on mixed sources. The
/// re-projector consumes the lifter's normalized 3d predictions; per-sample
/// gating zeroes the supervised term for samples without 3d ground truth.
///
/// On a non-finite loss the bundle rolls back to the last completed epoch
/// and the error is returned, so the retained state is always checkpointable.
pub fn train_joint(
    bundle: &mut ModelBundle,
    sources: &[DataSource],
    log: &mut TrainLog,
) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::EmptyInput { op: "train_joint" });
    }
    let ratio = bundle.config.mix_ratio.clone();
    if ratio.len() != sources.len() {
        return Err(Error::Config(format!(
            "mix ratio has {} entries but {} sources were given",
            ratio.len(),
            sources.len()
        )));
    }
    let target = bundle.config.joint_epochs;
    let done = bundle.progress.joint_done;

    let mut prepared = Vec::with_capacity(sources.len());
    let mut names = Vec::with_capacity(sources.len());
    for src in sources {
        prepared.push(prepare_samples(
            &src.samples,
            &bundle.topology,
            &bundle.stats2d,
            &bundle.stats3d,
        )?);
        names.push(src.name.clone());
    }
    let lens: Vec<usize> = prepared.iter().map(|p| p.len()).collect();
    if target > done {
        // Fail on impossible configurations before any training step.
        let probe = make_index_batches(&lens, &ratio, bundle.config.batch_size, 0)?;
        if probe.is_empty() {
            return Err(Error::Config(format!(
                "sources of sizes {lens:?} cannot fill one batch of {} at ratio {ratio:?}",
                bundle.config.batch_size
            )));
        }
    }

    // Fresh optimizer moments when joint training starts; the objective
    // changes shape, stale moments from pretraining would bleed in.
    if done == 0 && target > 0 {
        let hyper = AdamHyper::with_learning_rate(bundle.config.learning_rate);
        bundle.lifter_opt = AdamState::new(&bundle.lifter, hyper);
        bundle.reprojector_opt = AdamState::new(&bundle.reprojector, hyper);
    }

    let weights = bundle.config.weights;
    for epoch in done..target {
        let started = std::time::Instant::now();
        let rollback = (
            bundle.lifter.clone(),
            bundle.reprojector.clone(),
            bundle.lifter_opt.clone(),
            bundle.reprojector_opt.clone(),
        );
        let shuffle_seed = derive_seed(
            bundle.config.seed,
            &[SEED_JOINT, SEED_SHUFFLE, epoch as u64],
        );
        let batches =
            make_index_batches(&lens, &ratio, bundle.config.batch_size, shuffle_seed)?;
        let mut mask_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            bundle.config.seed,
            &[SEED_JOINT, SEED_MASKS, epoch as u64],
        ));
        let mut acc = EpochAccumulator::new();
        for (step, picks) in batches.iter().enumerate() {
            let batch = gather_batch(&prepared, picks, &bundle.topology);
            let masks_l = bundle
                .lifter
                .draw_dropout_masks(batch.batch_size(), &mut mask_rng);
            let masks_r = bundle
                .reprojector
                .draw_dropout_masks(batch.batch_size(), &mut mask_rng);
            let result = joint_step(
                &mut bundle.lifter,
                &mut bundle.reprojector,
                &batch,
                &weights,
                &bundle.stats3d,
                &bundle.topology,
                Some(bundle.config.bn_momentum),
                &masks_l,
                &masks_r,
            )
            .and_then(|(out, grads_l, grads_r)| {
                adam_step(&mut bundle.lifter, &grads_l, &mut bundle.lifter_opt)?;
                adam_step(
                    &mut bundle.reprojector,
                    &grads_r,
                    &mut bundle.reprojector_opt,
                )?;
                Ok(out)
            });
            let out = match result {
                Ok(out) => out,
                Err(e) => {
                    // Roll back to the last completed epoch so the retained
                    // state stays checkpointable.
                    (
                        bundle.lifter,
                        bundle.reprojector,
                        bundle.lifter_opt,
                        bundle.reprojector_opt,
                    ) = rollback;
                    return Err(match e {
                        Error::NonFinite { .. } => Error::NonFiniteLoss {
                            phase: "joint",
                            epoch,
                            step,
                        },
                        other => other,
                    });
                }
            };
            acc.add(
                picks,
                &names,
                &out.per_sample_l3d,
                &out.per_sample_l2d,
                &out.per_sample_lsymm,
            );
        }
        bundle.progress.joint_done = epoch + 1;
        log.push(acc.finish(
            "joint",
            epoch,
            weights,
            started.elapsed().as_millis() as u64,
        ))?;
    }
    Ok(())
}

/// Run whichever of the three phases still have epochs left, in order.
/// `sources` feeds the joint phase; the first source must be 3d-annotated
/// and also drives both pretraining phases.
pub fn train_full(
    bundle: &mut ModelBundle,
    sources: &[DataSource],
    log: &mut TrainLog,
) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::EmptyInput { op: "train_full" });
    }
    train_phase_lifter(bundle, &sources[0].samples, log)?;
    train_phase_reprojector(bundle, &sources[0].samples, log)?;
    train_joint(bundle, sources, log)?;
    Ok(())
}
