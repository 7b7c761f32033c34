//! Evaluation metrics (MPJE, PCK, AUC) and the cross-convention adjustments
//! applied before scoring: bone-length re-targeting and the pelvis shift.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::skeleton::{Frame, Pose3D, SkeletonTopology};

fn joint_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn check_metric_batch(op: &'static str, pred: &[Pose3D], gt: &[Pose3D]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::EmptyInput { op });
    }
    if pred.len() != gt.len() {
        return Err(Error::Invalid {
            op,
            msg: format!("batch sizes differ: {} vs {}", pred.len(), gt.len()),
        });
    }
    for (p, g) in pred.iter().zip(gt) {
        if p.frame() != Frame::RootCentered || g.frame() != Frame::RootCentered {
            return Err(Error::FrameMismatch {
                op,
                expected: "root_centered",
                got: if p.frame() != Frame::RootCentered {
                    p.frame()
                } else {
                    g.frame()
                },
            });
        }
        if p.joint_count() != g.joint_count() {
            return Err(Error::JointCountMismatch {
                op,
                expected: g.joint_count(),
                got: p.joint_count(),
            });
        }
    }
    Ok(())
}

/// Mean per-joint Euclidean error in millimeters, no rigid alignment.
pub fn mpje(pred: &[Pose3D], gt: &[Pose3D]) -> Result<f64> {
    check_metric_batch("mpje", pred, gt)?;
    let joints = pred[0].joint_count();
    let mut sum = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        for (a, b) in p.coords().iter().zip(g.coords()) {
            sum += joint_distance(*a, *b);
        }
    }
    Ok(sum / (pred.len() * joints) as f64)
}

/// Mean error of each joint across the batch, in topology joint order.
pub fn per_joint_errors(pred: &[Pose3D], gt: &[Pose3D]) -> Result<Vec<f64>> {
    check_metric_batch("per_joint_errors", pred, gt)?;
    let joints = pred[0].joint_count();
    let mut sums = vec![0.0; joints];
    for (p, g) in pred.iter().zip(gt) {
        for (j, (a, b)) in p.coords().iter().zip(g.coords()).enumerate() {
            sums[j] += joint_distance(*a, *b);
        }
    }
    Ok(sums.into_iter().map(|s| s / pred.len() as f64).collect())
}

/// Percentage of joints whose error falls below `threshold_mm`.
pub fn pck(pred: &[Pose3D], gt: &[Pose3D], threshold_mm: f64) -> Result<f64> {
    if threshold_mm <= 0.0 {
        return Err(Error::Invalid {
            op: "pck",
            msg: format!("threshold {threshold_mm} must be positive"),
        });
    }
    check_metric_batch("pck", pred, gt)?;
    let joints = pred[0].joint_count();
    let mut correct = 0usize;
    for (p, g) in pred.iter().zip(gt) {
        for (a, b) in p.coords().iter().zip(g.coords()) {
            if joint_distance(*a, *b) < threshold_mm {
                correct += 1;
            }
        }
    }
    Ok(100.0 * correct as f64 / (pred.len() * joints) as f64)
}

/// Normalized area under the PCK-versus-threshold curve: the mean of
/// PCK/100 over an ascending grid of thresholds.
pub fn auc(pred: &[Pose3D], gt: &[Pose3D], threshold_grid: &[f64]) -> Result<f64> {
    if threshold_grid.is_empty() {
        return Err(Error::EmptyInput { op: "auc" });
    }
    let ascending = threshold_grid.windows(2).all(|w| w[0] < w[1]);
    if !ascending || threshold_grid[0] <= 0.0 {
        return Err(Error::Invalid {
            op: "auc",
            msg: "threshold grid must be ascending and positive".into(),
        });
    }
    let mut total = 0.0;
    for &t in threshold_grid {
        total += pck(pred, gt, t)? / 100.0;
    }
    Ok(total / threshold_grid.len() as f64)
}

/// 31 thresholds uniformly covering (0, 150] millimeters.
pub fn default_auc_grid() -> Vec<f64> {
    (1..=31).map(|k| 150.0 * k as f64 / 31.0).collect()
}

/// Rescale each bone to a target length while preserving its direction.
///
/// Walks the kinematic tree root-outward, so every child is repositioned
/// relative to its already-retargeted parent. `target_bone_lengths` follows
/// `topo.bones()` order.
pub fn retarget(
    pred: &Pose3D,
    target_bone_lengths: &[f64],
    topo: &SkeletonTopology,
) -> Result<Pose3D> {
    if pred.frame() != Frame::RootCentered {
        return Err(Error::FrameMismatch {
            op: "retarget",
            expected: "root_centered",
            got: pred.frame(),
        });
    }
    pred.check_topology("retarget", topo)?;
    if target_bone_lengths.len() != topo.bone_count() {
        return Err(Error::DimMismatch {
            op: "retarget",
            expected: topo.bone_count(),
            got: target_bone_lengths.len(),
        });
    }
    if let Some(bad) = target_bone_lengths.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::Invalid {
            op: "retarget",
            msg: format!(
                "target length for bone '{}' must be positive",
                topo.joint_names()[topo.bones()[bad]]
            ),
        });
    }
    let mut out = pred.coords().to_vec();
    for (k, &child) in topo.bones().iter().enumerate() {
        let parent = topo.parent(child).expect("bones have parents");
        let a = pred.coords()[child];
        let b = pred.coords()[parent];
        let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if len == 0.0 {
            return Err(Error::ZeroLengthBone {
                bone: topo.joint_names()[child].clone(),
            });
        }
        let scale = target_bone_lengths[k] / len;
        // Parents precede children in bone order, so out[parent] is final.
        out[child] = [
            out[parent][0] + d[0] * scale,
            out[parent][1] + d[1] * scale,
            out[parent][2] + d[2] * scale,
        ];
    }
    Pose3D::new(out, Frame::RootCentered)
}

/// Move the pelvis and both hip joints toward the neck by `ratio`, leaving
/// everything else in place. This compensates for datasets that define the
/// pelvis higher up the spine. The adjusted root leaves the origin; the frame
/// tag is kept so the metric functions accept the pose.
pub fn pelvis_adjust(pose: &Pose3D, topo: &SkeletonTopology, ratio: f64) -> Result<Pose3D> {
    if pose.frame() != Frame::RootCentered {
        return Err(Error::FrameMismatch {
            op: "pelvis_adjust",
            expected: "root_centered",
            got: pose.frame(),
        });
    }
    pose.check_topology("pelvis_adjust", topo)?;
    let (hip_l, hip_r) = topo.hip_joints().ok_or_else(|| Error::Invalid {
        op: "pelvis_adjust",
        msg: "topology has no 'hip_pelvis' segment to locate the hips".into(),
    })?;
    let neck = pose.coords()[topo.neck_index()];
    let mut out = pose.coords().to_vec();
    for j in [topo.root_index(), hip_l, hip_r] {
        for d in 0..3 {
            out[j][d] += ratio * (neck[d] - out[j][d]);
        }
    }
    Pose3D::new(out, Frame::RootCentered)
}

#[derive(Debug, Clone, Serialize)]
pub struct JointErrorRow {
    pub joint: String,
    pub mpje: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ActivityRow {
    pub tag: String,
    pub count: usize,
    pub mpje: f64,
    pub pck: f64,
    pub auc: f64,
}

/// Full evaluation summary: global metrics, a per-joint error table, and a
/// per-activity breakdown keyed by sample source tags.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub sample_count: usize,
    pub mpje: f64,
    pub pck: f64,
    pub pck_threshold: f64,
    pub auc: f64,
    pub per_joint: Vec<JointErrorRow>,
    pub per_activity: Vec<ActivityRow>,
}

impl EvalReport {
    pub fn compute(
        pred: &[Pose3D],
        gt: &[Pose3D],
        tags: &[String],
        topo: &SkeletonTopology,
        pck_threshold: f64,
        auc_grid: &[f64],
    ) -> Result<Self> {
        if tags.len() != pred.len() {
            return Err(Error::Invalid {
                op: "EvalReport",
                msg: format!("{} tags for {} samples", tags.len(), pred.len()),
            });
        }
        let global_mpje = mpje(pred, gt)?;
        let global_pck = pck(pred, gt, pck_threshold)?;
        let global_auc = auc(pred, gt, auc_grid)?;
        let per_joint = per_joint_errors(pred, gt)?
            .into_iter()
            .zip(topo.joint_names())
            .map(|(e, name)| JointErrorRow {
                joint: name.clone(),
                mpje: e,
            })
            .collect();

        let mut unique_tags: Vec<&String> = tags.iter().collect();
        unique_tags.sort();
        unique_tags.dedup();
        let mut per_activity = Vec::new();
        for tag in unique_tags {
            let idx: Vec<usize> = (0..pred.len()).filter(|&i| &tags[i] == tag).collect();
            let p: Vec<Pose3D> = idx.iter().map(|&i| pred[i].clone()).collect();
            let g: Vec<Pose3D> = idx.iter().map(|&i| gt[i].clone()).collect();
            per_activity.push(ActivityRow {
                tag: tag.clone(),
                count: idx.len(),
                mpje: mpje(&p, &g)?,
                pck: pck(&p, &g, pck_threshold)?,
                auc: auc(&p, &g, auc_grid)?,
            });
        }
        Ok(Self {
            sample_count: pred.len(),
            mpje: global_mpje,
            pck: global_pck,
            pck_threshold,
            auc: global_auc,
            per_joint,
            per_activity,
        })
    }

    /// Line-delimited form: a summary line, one line per joint, one per
    /// activity. The same shape as the training log.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let summary = serde_json::json!({
            "kind": "summary",
            "sample_count": self.sample_count,
            "mpje": self.mpje,
            "pck": self.pck,
            "pck_threshold": self.pck_threshold,
            "auc": self.auc,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        for row in &self.per_joint {
            let line = serde_json::json!({"kind": "per_joint", "joint": row.joint, "mpje": row.mpje});
            out.push_str(&line.to_string());
            out.push('\n');
        }
        for row in &self.per_activity {
            let line = serde_json::json!({
                "kind": "activity",
                "tag": row.tag,
                "count": row.count,
                "mpje": row.mpje,
                "pck": row.pck,
                "auc": row.auc,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    /// Human-readable fixed-width table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "samples {}   MPJE {:.2} mm   PCK@{:.0} {:.1}%   AUC {:.3}\n",
            self.sample_count, self.mpje, self.pck_threshold, self.pck, self.auc
        ));
        if !self.per_activity.is_empty() {
            out.push_str(&format!(
                "{:<12} {:>7} {:>10} {:>8} {:>7}\n",
                "activity", "count", "mpje(mm)", "pck(%)", "auc"
            ));
            for row in &self.per_activity {
                out.push_str(&format!(
                    "{:<12} {:>7} {:>10.2} {:>8.1} {:>7.3}\n",
                    row.tag, row.count, row.mpje, row.pck, row.auc
                ));
            }
        }
        out.push_str(&format!("{:<16} {:>10}\n", "joint", "mpje(mm)"));
        for row in &self.per_joint {
            out.push_str(&format!("{:<16} {:>10.2}\n", row.joint, row.mpje));
        }
        out
    }
}
