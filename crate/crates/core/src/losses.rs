//! The four training loss terms and their gradients with respect to the
//! predicted quantities.
//!
//! Reduction convention: within a sample, squared coordinate errors are
//! summed; the sum is then averaged over the N samples of the batch. Reported
//! magnitudes depend on this choice, so it is fixed here once.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{Frame, Pose2D, Pose3D, SkeletonTopology};

/// Scalar weights of the three loss terms in the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Invalid {
                    op: "LossWeights",
                    msg: format!("{name} = {v} outside [0, 1]"),
                });
            }
        }
        Ok(Self { alpha, beta, gamma })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            gamma: 1.0,
        }
    }
}

/// One batch's loss decomposition. `l3d` is the post-gating value, so
/// `total` always recomposes as `alpha·l3d + beta·l2d + gamma·lsymm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l3d: f64,
    pub l2d: f64,
    pub lsymm: f64,
    pub total: f64,
    pub batch_size: usize,
}

/// Weighted combination of the three components.
///
/// When `has_3d_gt` is false the supervised term is gated off: the reported
/// `l3d` becomes 0 and contributes nothing to the total.
pub fn total_loss(
    l3d: f64,
    l2d: f64,
    lsymm: f64,
    weights: &LossWeights,
    has_3d_gt: bool,
    batch_size: usize,
) -> Result<LossReport> {
    for (name, v) in [("l3d", l3d), ("l2d", l2d), ("lsymm", lsymm)] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                op: "total_loss",
                what: name.into(),
            });
        }
    }
    let l3d = if has_3d_gt { l3d } else { 0.0 };
    let total = weights.alpha * l3d + weights.beta * l2d + weights.gamma * lsymm;
    Ok(LossReport {
        l3d,
        l2d,
        lsymm,
        total,
        batch_size,
    })
}

/// Result of a masked mean-over-batch squared error.
#[derive(Debug, Clone)]
pub struct SquaredError {
    pub value: f64,
    /// dValue/dPred, same shape as the prediction matrix.
    pub grad: Array2<f64>,
    /// Each sample's summed (masked) squared error; `value` is their mean.
    pub per_sample: Vec<f64>,
}

/// `(1/N) Σ_samples Σ_coords mask·(pred − target)²` with gradient
/// `2·mask·(pred − target)/N`. A `None` mask means everything counts.
pub fn squared_error(
    pred: &Array2<f64>,
    target: &Array2<f64>,
    mask: Option<&Array2<f64>>,
) -> Result<SquaredError> {
    if pred.dim() != target.dim() {
        return Err(Error::Invalid {
            op: "squared_error",
            msg: format!("pred {:?} vs target {:?}", pred.dim(), target.dim()),
        });
    }
    if let Some(m) = mask {
        if m.dim() != pred.dim() {
            return Err(Error::Invalid {
                op: "squared_error",
                msg: format!("mask {:?} vs pred {:?}", m.dim(), pred.dim()),
            });
        }
    }
    let n = pred.nrows();
    if n == 0 {
        return Err(Error::EmptyInput {
            op: "squared_error",
        });
    }
    let diff = pred - target;
    let masked = match mask {
        Some(m) => &diff * m,
        None => diff.clone(),
    };
    let per_sample: Vec<f64> = masked
        .rows()
        .into_iter()
        .zip(diff.rows())
        .map(|(m, d)| m.iter().zip(d.iter()).map(|(m, d)| m * d).sum())
        .collect();
    let value = per_sample.iter().sum::<f64>() / n as f64;
    let grad = masked * (2.0 / n as f64);
    Ok(SquaredError {
        value,
        grad,
        per_sample,
    })
}

fn flatten_batch<T, F: Fn(&T) -> Vec<f64>>(poses: &[T], width: usize, f: F) -> Array2<f64> {
    let mut out = Array2::zeros((poses.len(), width));
    for (i, p) in poses.iter().enumerate() {
        for (j, v) in f(p).into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    out
}

fn check_pose_batches<T, G: Fn(&T) -> (Frame, usize)>(
    op: &'static str,
    pred: &[T],
    gt: &[T],
    info: G,
) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::EmptyInput { op });
    }
    if pred.len() != gt.len() {
        return Err(Error::Invalid {
            op,
            msg: format!("batch sizes differ: {} vs {}", pred.len(), gt.len()),
        });
    }
    let (frame0, joints0) = info(&pred[0]);
    for p in pred.iter().chain(gt.iter()) {
        let (f, j) = info(p);
        if f != frame0 {
            return Err(Error::FrameMismatch {
                op,
                expected: "uniform frames across the batch",
                got: f,
            });
        }
        if j != joints0 {
            return Err(Error::JointCountMismatch {
                op,
                expected: joints0,
                got: j,
            });
        }
    }
    Ok(())
}

/// Supervised 3d loss: mean over samples of the summed squared coordinate
/// error between prediction and ground truth. Returns the scalar and its
/// gradient with respect to the predictions (one flattened row per sample).
pub fn loss_3d(pred: &[Pose3D], gt: &[Pose3D]) -> Result<(f64, Array2<f64>)> {
    check_pose_batches("loss_3d", pred, gt, |p| (p.frame(), p.joint_count()))?;
    let width = pred[0].joint_count() * 3;
    let p = flatten_batch(pred, width, |p| p.flatten());
    let g = flatten_batch(gt, width, |p| p.flatten());
    let r = squared_error(&p, &g, None)?;
    Ok((r.value, r.grad))
}

/// Expand a per-joint visibility mask to a per-coordinate 0/1 matrix.
pub fn visibility_mask(visibility: &[Vec<bool>], joints: usize, dim: usize) -> Result<Array2<f64>> {
    let mut mask = Array2::zeros((visibility.len(), joints * dim));
    for (i, vis) in visibility.iter().enumerate() {
        if vis.len() != joints {
            return Err(Error::JointCountMismatch {
                op: "visibility_mask",
                expected: joints,
                got: vis.len(),
            });
        }
        for (j, &v) in vis.iter().enumerate() {
            if v {
                for d in 0..dim {
                    mask[[i, j * dim + d]] = 1.0;
                }
            }
        }
    }
    Ok(mask)
}

/// Re-projection loss: squared error between the re-projected and observed
/// 2d poses, restricted to visible joints. Masked joints contribute neither
/// loss nor gradient.
pub fn loss_reproj(
    reproj: &[Pose2D],
    target: &[Pose2D],
    visibility: Option<&[Vec<bool>]>,
) -> Result<(f64, Array2<f64>)> {
    check_pose_batches("loss_reproj", reproj, target, |p| {
        (p.frame(), p.joint_count())
    })?;
    let joints = reproj[0].joint_count();
    let width = joints * 2;
    let p = flatten_batch(reproj, width, |p| p.flatten());
    let t = flatten_batch(target, width, |p| p.flatten());
    let mask = match visibility {
        Some(vis) => {
            if vis.len() != reproj.len() {
                return Err(Error::Invalid {
                    op: "loss_reproj",
                    msg: format!(
                        "visibility covers {} samples, batch has {}",
                        vis.len(),
                        reproj.len()
                    ),
                });
            }
            Some(visibility_mask(vis, joints, 2)?)
        }
        None => None,
    };
    let r = squared_error(&p, &t, mask.as_ref())?;
    Ok((r.value, r.grad))
}

/// Result of the bone-length symmetry loss on a flattened batch.
#[derive(Debug, Clone)]
pub struct SymmetryLoss {
    pub value: f64,
    pub grad: Array2<f64>,
    pub per_sample: Vec<f64>,
}

/// Bone-length symmetry loss on a batch of flattened root-centered metric
/// poses (rows of `x0,y0,z0,x1,...`).
///
/// Per sample: the squared left/right length differences of every bone pair,
/// summed within each segment class, averaged over the segment classes. The
/// result is averaged over the batch. Gradients flow through the Euclidean
/// lengths to the joint coordinates; exactly-zero-length bones take a zero
/// subgradient.
pub fn symmetry_loss_flat(pred: &Array2<f64>, topo: &SkeletonTopology) -> Result<SymmetryLoss> {
    let j = topo.joint_count();
    if pred.ncols() != 3 * j {
        return Err(Error::DimMismatch {
            op: "loss_symmetry",
            expected: 3 * j,
            got: pred.ncols(),
        });
    }
    let n = pred.nrows();
    if n == 0 {
        return Err(Error::EmptyInput { op: "loss_symmetry" });
    }
    let n_segments = topo.symmetric_segments().len();
    if n_segments == 0 {
        return Err(Error::Invalid {
            op: "loss_symmetry",
            msg: "topology declares no symmetric segments".into(),
        });
    }

    let mut grad = Array2::zeros(pred.dim());
    let mut per_sample = vec![0.0; n];

    let joint = |row: ndarray::ArrayView1<f64>, idx: usize| -> [f64; 3] {
        [row[3 * idx], row[3 * idx + 1], row[3 * idx + 2]]
    };
    let bone = |row: ndarray::ArrayView1<f64>, child: usize| -> ([f64; 3], f64, usize) {
        let parent = topo.parent(child).expect("segment bones have parents");
        let c = joint(row, child);
        let p = joint(row, parent);
        let d = [c[0] - p[0], c[1] - p[1], c[2] - p[2]];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        (d, len, parent)
    };

    for (i, row) in pred.rows().into_iter().enumerate() {
        let mut sample_loss = 0.0;
        for seg in topo.symmetric_segments() {
            for (&bl, &br) in seg.left.iter().zip(seg.right.iter()) {
                let (dl, len_l, parent_l) = bone(row, bl);
                let (dr, len_r, parent_r) = bone(row, br);
                let diff = len_l - len_r;
                sample_loss += diff * diff;
                // d(diff²)/d(joint) via unit bone vectors; coefficient folds
                // in the segment-class and batch averaging.
                let coeff = 2.0 * diff / (n_segments as f64 * n as f64);
                if len_l > 0.0 {
                    for d in 0..3 {
                        let u = dl[d] / len_l;
                        grad[[i, 3 * bl + d]] += coeff * u;
                        grad[[i, 3 * parent_l + d]] -= coeff * u;
                    }
                }
                if len_r > 0.0 {
                    for d in 0..3 {
                        let u = dr[d] / len_r;
                        grad[[i, 3 * br + d]] -= coeff * u;
                        grad[[i, 3 * parent_r + d]] += coeff * u;
                    }
                }
            }
        }
        per_sample[i] = sample_loss / n_segments as f64;
    }
    let value = per_sample.iter().sum::<f64>() / n as f64;
    Ok(SymmetryLoss {
        value,
        grad,
        per_sample,
    })
}

/// [`symmetry_loss_flat`] over a batch of poses. Rejects normalized frames:
/// anisotropic scaling distorts lengths.
pub fn loss_symmetry(pred: &[Pose3D], topo: &SkeletonTopology) -> Result<(f64, Array2<f64>)> {
    if pred.is_empty() {
        return Err(Error::EmptyInput { op: "loss_symmetry" });
    }
    for p in pred {
        if p.frame() == Frame::Normalized {
            return Err(Error::FrameMismatch {
                op: "loss_symmetry",
                expected: "raw or root_centered",
                got: p.frame(),
            });
        }
        p.check_topology("loss_symmetry", topo)?;
    }
    let width = topo.joint_count() * 3;
    let flat = flatten_batch(pred, width, |p| p.flatten());
    let r = symmetry_loss_flat(&flat, topo)?;
    Ok((r.value, r.grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::SkeletonTopology;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_pose3(rng: &mut impl Rng, frame: Frame) -> Pose3D {
        let coords = (0..17)
            .map(|_| {
                [
                    rng.random_range(-400.0..400.0),
                    rng.random_range(-400.0..400.0),
                    rng.random_range(-400.0..400.0),
                ]
            })
            .collect();
        Pose3D::new(coords, frame).unwrap()
    }

    #[test]
    fn loss_3d_zero_at_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch: Vec<Pose3D> = (0..4).map(|_| random_pose3(&mut rng, Frame::Raw)).collect();
        let (value, grad) = loss_3d(&batch, &batch).unwrap();
        assert_eq!(value, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn loss_3d_single_coordinate_hand_expansion() {
        // One sample, one joint, pred − gt = (1, 0, 0): loss 1, gradient (2, 0, 0).
        let pred = vec![Pose3D::new(vec![[1.0, 0.0, 0.0]], Frame::Raw).unwrap()];
        let gt = vec![Pose3D::new(vec![[0.0, 0.0, 0.0]], Frame::Raw).unwrap()];
        let (value, grad) = loss_3d(&pred, &gt).unwrap();
        assert_eq!(value, 1.0);
        assert_eq!(grad.row(0).to_vec(), vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn loss_3d_matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pred: Vec<Pose3D> = (0..8).map(|_| random_pose3(&mut rng, Frame::Raw)).collect();
        let gt: Vec<Pose3D> = (0..8).map(|_| random_pose3(&mut rng, Frame::Raw)).collect();
        let (value, grad) = loss_3d(&pred, &gt).unwrap();

        let mut expected = 0.0;
        for (p, g) in pred.iter().zip(&gt) {
            for (a, b) in p.flatten().iter().zip(g.flatten()) {
                expected += (a - b) * (a - b);
            }
        }
        expected /= 8.0;
        assert!((value - expected).abs() / expected < 1e-10);
        for (i, (p, g)) in pred.iter().zip(&gt).enumerate() {
            for (d, (a, b)) in p.flatten().iter().zip(g.flatten()).enumerate() {
                let expect = 2.0 * (a - b) / 8.0;
                assert!((grad[[i, d]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_3d_rejects_frame_mismatch() {
        let pred = vec![Pose3D::new(vec![[0.0; 3]], Frame::Raw).unwrap()];
        let gt = vec![Pose3D::new(vec![[0.0; 3]], Frame::RootCentered).unwrap()];
        assert!(matches!(
            loss_3d(&pred, &gt),
            Err(Error::FrameMismatch { .. })
        ));
    }

    fn random_pose2(rng: &mut impl Rng) -> Pose2D {
        let coords = (0..17)
            .map(|_| [rng.random_range(-300.0..300.0), rng.random_range(-300.0..300.0)])
            .collect();
        Pose2D::new(coords, Frame::Raw).unwrap()
    }

    #[test]
    fn loss_reproj_zero_at_equality_and_fully_masked() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<Pose2D> = (0..4).map(|_| random_pose2(&mut rng)).collect();
        let b: Vec<Pose2D> = (0..4).map(|_| random_pose2(&mut rng)).collect();
        let (zero, _) = loss_reproj(&a, &a, None).unwrap();
        assert_eq!(zero, 0.0);
        // All joints invisible: the values cannot matter.
        let vis = vec![vec![false; 17]; 4];
        let (masked, grad) = loss_reproj(&a, &b, Some(&vis)).unwrap();
        assert_eq!(masked, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn loss_reproj_half_mask_equals_visible_subset_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pred: Vec<Pose2D> = (0..4).map(|_| random_pose2(&mut rng)).collect();
        let target: Vec<Pose2D> = (0..4).map(|_| random_pose2(&mut rng)).collect();
        let vis: Vec<Vec<bool>> = (0..4).map(|_| (0..17).map(|j| j % 2 == 0).collect()).collect();
        let (masked, _) = loss_reproj(&pred, &target, Some(&vis)).unwrap();

        // Subset-loop oracle: sum squared error over visible joints only.
        let mut expected = 0.0;
        for i in 0..4 {
            for j in 0..17 {
                if vis[i][j] {
                    let p = pred[i].coords()[j];
                    let t = target[i].coords()[j];
                    expected += (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2);
                }
            }
        }
        expected /= 4.0;
        assert!((masked - expected).abs() / expected < 1e-12);
    }

    fn symmetric_pose(topo: &SkeletonTopology) -> Pose3D {
        // Mirror-symmetric standing skeleton, root at origin.
        let mut coords = vec![[0.0f64; 3]; 17];
        coords[topo.joint_index("right_hip").unwrap()] = [-130.0, 0.0, 0.0];
        coords[topo.joint_index("right_knee").unwrap()] = [-130.0, 450.0, 0.0];
        coords[topo.joint_index("right_ankle").unwrap()] = [-130.0, 890.0, 0.0];
        coords[topo.joint_index("left_hip").unwrap()] = [130.0, 0.0, 0.0];
        coords[topo.joint_index("left_knee").unwrap()] = [130.0, 450.0, 0.0];
        coords[topo.joint_index("left_ankle").unwrap()] = [130.0, 890.0, 0.0];
        coords[topo.joint_index("spine").unwrap()] = [0.0, -230.0, 0.0];
        coords[topo.joint_index("neck").unwrap()] = [0.0, -480.0, 0.0];
        coords[topo.joint_index("nose").unwrap()] = [0.0, -580.0, 100.0];
        coords[topo.joint_index("head").unwrap()] = [0.0, -680.0, 60.0];
        coords[topo.joint_index("left_shoulder").unwrap()] = [150.0, -480.0, 0.0];
        coords[topo.joint_index("left_elbow").unwrap()] = [150.0, -200.0, 0.0];
        coords[topo.joint_index("left_wrist").unwrap()] = [150.0, 50.0, 0.0];
        coords[topo.joint_index("right_shoulder").unwrap()] = [-150.0, -480.0, 0.0];
        coords[topo.joint_index("right_elbow").unwrap()] = [-150.0, -200.0, 0.0];
        coords[topo.joint_index("right_wrist").unwrap()] = [-150.0, 50.0, 0.0];
        Pose3D::new(coords, Frame::RootCentered).unwrap()
    }

    #[test]
    fn loss_symmetry_zero_for_mirror_symmetric_pose() {
        let topo = SkeletonTopology::default_h36m17();
        let pose = symmetric_pose(&topo);
        let (value, grad) = loss_symmetry(&[pose], &topo).unwrap();
        assert_eq!(value, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn loss_symmetry_hand_expansion_one_long_forearm() {
        let topo = SkeletonTopology::default_h36m17();
        let mut coords = symmetric_pose(&topo).coords().to_vec();
        // Stretch the left forearm (elbow→wrist) by exactly 10mm along its axis.
        let wrist = topo.joint_index("left_wrist").unwrap();
        coords[wrist][1] += 10.0;
        let pose = Pose3D::new(coords, Frame::RootCentered).unwrap();
        let (value, _) = loss_symmetry(&[pose], &topo).unwrap();
        // One asymmetric bone pair: (10)² averaged over the 4 segment classes.
        let expected = 10.0_f64.powi(2) / 4.0;
        assert!((value - expected).abs() < 1e-9, "got {value}, expected {expected}");
    }

    #[test]
    fn loss_symmetry_rejects_normalized_frame() {
        let topo = SkeletonTopology::default_h36m17();
        let pose = Pose3D::new(vec![[0.0; 3]; 17], Frame::Normalized).unwrap();
        assert!(matches!(
            loss_symmetry(&[pose], &topo),
            Err(Error::FrameMismatch { .. })
        ));
    }

    #[test]
    fn loss_symmetry_zero_length_bones_take_zero_subgradient() {
        let topo = SkeletonTopology::default_h36m17();
        // Everything coincident: all lengths zero, all diffs zero.
        let pose = Pose3D::new(vec![[0.0; 3]; 17], Frame::RootCentered).unwrap();
        let (value, grad) = loss_symmetry(&[pose], &topo).unwrap();
        assert_eq!(value, 0.0);
        assert!(grad.iter().all(|&g| g.is_finite() && g == 0.0));

        // One side degenerate, other side stretched: loss finite, no NaNs.
        let mut coords = vec![[0.0f64; 3]; 17];
        coords[topo.joint_index("left_wrist").unwrap()] = [100.0, 0.0, 0.0];
        let pose = Pose3D::new(coords, Frame::RootCentered).unwrap();
        let (value, grad) = loss_symmetry(&[pose], &topo).unwrap();
        assert!(value > 0.0);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn loss_symmetry_gradient_matches_finite_differences() {
        let topo = SkeletonTopology::default_h36m17();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch: Vec<Pose3D> = (0..3)
            .map(|_| random_pose3(&mut rng, Frame::RootCentered))
            .collect();
        let (_, grad) = loss_symmetry(&batch, &topo).unwrap();

        let eps = 1e-5;
        for i in 0..batch.len() {
            for d in 0..51 {
                let eval = |delta: f64| {
                    let mut flat = batch[i].flatten();
                    flat[d] += delta;
                    let mut poses = batch.clone();
                    poses[i] = Pose3D::from_flat(&flat, Frame::RootCentered).unwrap();
                    loss_symmetry(&poses, &topo).unwrap().0
                };
                let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let denom = grad[[i, d]].abs().max(fd.abs()).max(1e-4);
                assert!(
                    (grad[[i, d]] - fd).abs() / denom < 1e-5,
                    "sample {i} coord {d}: {} vs fd {fd}",
                    grad[[i, d]]
                );
            }
        }
    }

    #[test]
    fn loss_symmetry_invariant_under_rigid_motion() {
        let topo = SkeletonTopology::default_h36m17();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pose = random_pose3(&mut rng, Frame::RootCentered);
        let (base, _) = loss_symmetry(&[pose.clone()], &topo).unwrap();

        // Rotation about y by a random angle plus a translation.
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = angle.sin_cos();
        let t = [55.0, -12.0, 300.0];
        let moved: Vec<[f64; 3]> = pose
            .coords()
            .iter()
            .map(|p| {
                [
                    c * p[0] + s * p[2] + t[0],
                    p[1] + t[1],
                    -s * p[0] + c * p[2] + t[2],
                ]
            })
            .collect();
        let moved = Pose3D::new(moved, Frame::Raw).unwrap();
        let (rotated, _) = loss_symmetry(&[moved], &topo).unwrap();
        assert!((base - rotated).abs() / base.max(1e-300) < 1e-9);
    }

    #[test]
    fn total_loss_paper_weights() {
        let w = LossWeights::default();
        assert_eq!((w.alpha, w.beta, w.gamma), (0.5, 0.5, 1.0));
        let report = total_loss(1.0, 1.0, 1.0, &w, true, 64).unwrap();
        assert_eq!(report.total, 2.0);
        assert_eq!(report.batch_size, 64);
    }

    #[test]
    fn total_loss_gates_alpha_without_ground_truth() {
        let w = LossWeights::default();
        let report = total_loss(123.0, 2.0, 4.0, &w, false, 8).unwrap();
        assert_eq!(report.l3d, 0.0);
        assert_eq!(report.total, 0.5 * 2.0 + 1.0 * 4.0);
    }

    #[test]
    fn total_loss_zero_components_zero_total() {
        let report = total_loss(0.0, 0.0, 0.0, &LossWeights::default(), true, 1).unwrap();
        assert_eq!(report.total, 0.0);
    }

    #[test]
    fn loss_report_recomposes_from_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let w = LossWeights::new(
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            )
            .unwrap();
            let (a, b, c) = (
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..10.0),
            );
            let r = total_loss(a, b, c, &w, true, 4).unwrap();
            assert!((r.total - (w.alpha * r.l3d + w.beta * r.l2d + w.gamma * r.lsymm)).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_weights_reject_out_of_range() {
        assert!(LossWeights::new(1.5, 0.5, 0.5).is_err());
        assert!(LossWeights::new(0.5, -0.1, 0.5).is_err());
    }
}
