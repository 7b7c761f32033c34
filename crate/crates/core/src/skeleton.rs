//! Joint topology, pose containers, and the geometric preprocessing every
//! other module builds on: root-centering, normalization, bone lengths.
//!
//! Coordinate conventions used throughout the crate:
//! * 2d poses are (x, y) in pixels while raw; x grows right, y grows down.
//! * 3d poses are (x, y, z) in millimeters; z is depth away from the camera.
//! * Flattened vectors are joint-major: `x0, y0, (z0,) x1, y1, (z1,) ...`
//!   in topology joint order. This ordering is part of the file-format and
//!   checkpoint contract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which reference frame a pose is expressed in.
///
/// `Raw` is as-captured (pixels / world millimeters), `RootCentered` has the
/// root joint translated to the origin, `Normalized` is root-centered with
/// per-coordinate zero-mean unit-std scaling applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Raw,
    RootCentered,
    Normalized,
}

impl std::fmt::Display for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Frame::Raw => write!(f, "raw"),
            Frame::RootCentered => write!(f, "root_centered"),
            Frame::Normalized => write!(f, "normalized"),
        }
    }
}

/// One left/right pair of bone chains, e.g. the two arms.
///
/// Bones are identified by their child joint index (the bone runs from
/// `parent(child)` to `child`). `left` and `right` pair up bone-by-bone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymmetricSegment {
    pub name: String,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

/// Joint tree plus the symmetric-segment table.
///
/// Joints are ordered; the parent table must form a single tree rooted at
/// `root_index`, and parents must be declared before their children so that
/// joint order doubles as a topological order for kinematic walks.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTopology {
    name: String,
    joint_names: Vec<String>,
    parent: Vec<Option<usize>>,
    symmetric_segments: Vec<SymmetricSegment>,
    root_index: usize,
    neck_index: usize,
    bones: Vec<usize>,
}

pub const TOPOLOGY_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TOPOLOGY_NAME: &str = "h36m17";

impl SkeletonTopology {
    pub fn new(
        name: impl Into<String>,
        joint_names: Vec<String>,
        parent: Vec<Option<usize>>,
        symmetric_segments: Vec<SymmetricSegment>,
        root_index: usize,
        neck_index: usize,
    ) -> Result<Self> {
        let n = joint_names.len();
        if n == 0 {
            return Err(Error::Topology("no joints".into()));
        }
        if parent.len() != n {
            return Err(Error::Topology(format!(
                "parent table has {} entries for {} joints",
                parent.len(),
                n
            )));
        }
        if root_index >= n || neck_index >= n {
            return Err(Error::Topology("root or neck index out of range".into()));
        }
        if parent[root_index].is_some() {
            return Err(Error::Topology("root joint must have no parent".into()));
        }
        for (j, p) in parent.iter().enumerate() {
            match p {
                None if j != root_index => {
                    return Err(Error::Topology(format!(
                        "joint '{}' has no parent but is not the root",
                        joint_names[j]
                    )));
                }
                Some(p) if *p >= n => {
                    return Err(Error::Topology(format!(
                        "joint '{}' has out-of-range parent {}",
                        joint_names[j], p
                    )));
                }
                // Parent-before-child keeps joint order topological and, as a
                // side effect, makes cycles impossible to express.
                Some(p) if *p >= j => {
                    return Err(Error::Topology(format!(
                        "joint '{}' must be declared after its parent '{}'",
                        joint_names[j], joint_names[*p]
                    )));
                }
                _ => {}
            }
        }
        let mut seen = std::collections::HashSet::new();
        for name in &joint_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Topology(format!("duplicate joint name '{name}'")));
            }
        }
        for seg in &symmetric_segments {
            if seg.left.len() != seg.right.len() {
                return Err(Error::Topology(format!(
                    "segment '{}' has {} left bones but {} right bones",
                    seg.name,
                    seg.left.len(),
                    seg.right.len()
                )));
            }
            for &b in seg.left.iter().chain(seg.right.iter()) {
                if b >= n {
                    return Err(Error::Topology(format!(
                        "segment '{}' references joint index {} out of range",
                        seg.name, b
                    )));
                }
                if parent[b].is_none() {
                    return Err(Error::Topology(format!(
                        "segment '{}' references the root, which heads no bone",
                        seg.name
                    )));
                }
            }
        }
        let bones = (0..n).filter(|&j| j != root_index).collect();
        Ok(Self {
            name: name.into(),
            joint_names,
            parent,
            symmetric_segments,
            root_index,
            neck_index,
            bones,
        })
    }

    /// The 17-joint topology used by default, with the pelvis as root.
    ///
    /// Joint order (the file-format contract): pelvis, right_hip, right_knee,
    /// right_ankle, left_hip, left_knee, left_ankle, spine, neck, nose, head,
    /// left_shoulder, left_elbow, left_wrist, right_shoulder, right_elbow,
    /// right_wrist.
    pub fn default_h36m17() -> Self {
        let names: Vec<String> = [
            "pelvis",
            "right_hip",
            "right_knee",
            "right_ankle",
            "left_hip",
            "left_knee",
            "left_ankle",
            "spine",
            "neck",
            "nose",
            "head",
            "left_shoulder",
            "left_elbow",
            "left_wrist",
            "right_shoulder",
            "right_elbow",
            "right_wrist",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let parent = vec![
            None,
            Some(0),
            Some(1),
            Some(2),
            Some(0),
            Some(4),
            Some(5),
            Some(0),
            Some(7),
            Some(8),
            Some(9),
            Some(8),
            Some(11),
            Some(12),
            Some(8),
            Some(14),
            Some(15),
        ];
        let segments = vec![
            SymmetricSegment {
                name: "arm".into(),
                left: vec![12, 13],
                right: vec![15, 16],
            },
            SymmetricSegment {
                name: "leg".into(),
                left: vec![5, 6],
                right: vec![2, 3],
            },
            SymmetricSegment {
                name: "neck_shoulder".into(),
                left: vec![11],
                right: vec![14],
            },
            SymmetricSegment {
                name: "hip_pelvis".into(),
                left: vec![4],
                right: vec![1],
            },
        ];
        Self::new(DEFAULT_TOPOLOGY_NAME, names, parent, segments, 0, 8)
            .expect("default topology is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parent[joint]
    }

    pub fn root_index(&self) -> usize {
        self.root_index
    }

    pub fn neck_index(&self) -> usize {
        self.neck_index
    }

    /// All bones as child joint indices, parents-before-children.
    pub fn bones(&self) -> &[usize] {
        &self.bones
    }

    pub fn bone_count(&self) -> usize {
        self.bones.len()
    }

    /// Position of `child_joint`'s bone within the `bones()` ordering.
    pub fn bone_position(&self, child_joint: usize) -> Option<usize> {
        self.bones.iter().position(|&b| b == child_joint)
    }

    pub fn symmetric_segments(&self) -> &[SymmetricSegment] {
        &self.symmetric_segments
    }

    /// Left and right hip joints, taken from the first bone pair of the
    /// `hip_pelvis` segment class when present.
    pub fn hip_joints(&self) -> Option<(usize, usize)> {
        self.symmetric_segments
            .iter()
            .find(|s| s.name == "hip_pelvis")
            .and_then(|s| match (s.left.first(), s.right.first()) {
                (Some(&l), Some(&r)) => Some((l, r)),
                _ => None,
            })
    }

    /// Serialize to the versioned text description understood by [`SkeletonTopology::from_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("poselift-topology v{TOPOLOGY_FORMAT_VERSION}\n"));
        out.push_str(&format!("name {}\n", self.name));
        out.push_str(&format!("root {}\n", self.joint_names[self.root_index]));
        out.push_str(&format!("neck {}\n", self.joint_names[self.neck_index]));
        for (j, name) in self.joint_names.iter().enumerate() {
            match self.parent[j] {
                None => out.push_str(&format!("joint {name} -\n")),
                Some(p) => out.push_str(&format!("joint {name} {}\n", self.joint_names[p])),
            }
        }
        for seg in &self.symmetric_segments {
            let left: Vec<&str> = seg.left.iter().map(|&b| self.joint_names[b].as_str()).collect();
            let right: Vec<&str> = seg.right.iter().map(|&b| self.joint_names[b].as_str()).collect();
            out.push_str(&format!(
                "segment {} {} {}\n",
                seg.name,
                left.join(","),
                right.join(",")
            ));
        }
        out
    }

    /// Parse the line-oriented topology description.
    ///
    /// ```text
    /// poselift-topology v1
    /// name h36m17
    /// root pelvis
    /// neck neck
    /// joint pelvis -
    /// joint right_hip pelvis
    /// ...
    /// segment arm left_elbow,left_wrist right_elbow,right_wrist
    /// ```
    ///
    /// Joints must appear after their parent; bones in segment lines are
    /// named by their child joint. Blank lines and `#` comments are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Topology("empty topology description".into()))?;
        let version = header
            .strip_prefix("poselift-topology v")
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| Error::Topology(format!("bad header line '{header}'")))?;
        if version != TOPOLOGY_FORMAT_VERSION {
            return Err(Error::Topology(format!(
                "unsupported topology version {version}, this build reads v{TOPOLOGY_FORMAT_VERSION}"
            )));
        }

        let mut name = None;
        let mut root_name = None;
        let mut neck_name = None;
        let mut joint_names: Vec<String> = Vec::new();
        let mut parent_names: Vec<Option<String>> = Vec::new();
        let mut segment_lines: Vec<(String, String, String)> = Vec::new();

        for line in lines {
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            match key {
                "name" => name = parts.next().map(str::to_string),
                "root" => root_name = parts.next().map(str::to_string),
                "neck" => neck_name = parts.next().map(str::to_string),
                "joint" => {
                    let j = parts
                        .next()
                        .ok_or_else(|| Error::Topology(format!("bad joint line '{line}'")))?;
                    let p = parts
                        .next()
                        .ok_or_else(|| Error::Topology(format!("bad joint line '{line}'")))?;
                    joint_names.push(j.to_string());
                    parent_names.push(if p == "-" { None } else { Some(p.to_string()) });
                }
                "segment" => {
                    let (n, l, r) = (parts.next(), parts.next(), parts.next());
                    match (n, l, r) {
                        (Some(n), Some(l), Some(r)) => {
                            segment_lines.push((n.to_string(), l.to_string(), r.to_string()))
                        }
                        _ => return Err(Error::Topology(format!("bad segment line '{line}'"))),
                    }
                }
                other => {
                    return Err(Error::Topology(format!("unknown directive '{other}'")));
                }
            }
        }

        let name = name.ok_or_else(|| Error::Topology("missing 'name' line".into()))?;
        let root_name = root_name.ok_or_else(|| Error::Topology("missing 'root' line".into()))?;
        let neck_name = neck_name.ok_or_else(|| Error::Topology("missing 'neck' line".into()))?;

        let index_of = |n: &str| -> Result<usize> {
            joint_names
                .iter()
                .position(|j| j == n)
                .ok_or_else(|| Error::Topology(format!("unknown joint '{n}'")))
        };

        let mut parent = Vec::with_capacity(joint_names.len());
        for p in &parent_names {
            parent.push(match p {
                None => None,
                Some(p) => Some(index_of(p)?),
            });
        }
        let mut segments = Vec::new();
        for (seg_name, l, r) in segment_lines {
            let parse_chain = |s: &str| -> Result<Vec<usize>> {
                s.split(',').map(index_of).collect()
            };
            segments.push(SymmetricSegment {
                name: seg_name,
                left: parse_chain(&l)?,
                right: parse_chain(&r)?,
            });
        }
        let root_index = index_of(&root_name)?;
        let neck_index = index_of(&neck_name)?;
        Self::new(name, joint_names, parent, segments, root_index, neck_index)
    }
}

fn check_finite(op: &'static str, values: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    for v in values {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                op,
                what: what.to_string(),
            });
        }
    }
    Ok(())
}

macro_rules! pose_type {
    ($name:ident, $dim:literal, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            coords: Vec<[f64; $dim]>,
            frame: Frame,
        }

        impl $name {
            pub const DIM: usize = $dim;

            pub fn new(coords: Vec<[f64; $dim]>, frame: Frame) -> Result<Self> {
                check_finite(
                    stringify!($name),
                    coords.iter().flat_map(|c| c.iter().copied()),
                    "coords",
                )?;
                Ok(Self { coords, frame })
            }

            pub fn coords(&self) -> &[[f64; $dim]] {
                &self.coords
            }

            pub fn frame(&self) -> Frame {
                self.frame
            }

            pub fn joint_count(&self) -> usize {
                self.coords.len()
            }

            /// Joint-major flattening: `x0, y0, (z0,) x1, ...`
            pub fn flatten(&self) -> Vec<f64> {
                self.coords.iter().flatten().copied().collect()
            }

            pub fn from_flat(flat: &[f64], frame: Frame) -> Result<Self> {
                if flat.len() % $dim != 0 {
                    return Err(Error::DimMismatch {
                        op: concat!(stringify!($name), "::from_flat"),
                        expected: $dim,
                        got: flat.len(),
                    });
                }
                let coords = flat
                    .chunks_exact($dim)
                    .map(|c| {
                        let mut a = [0.0; $dim];
                        a.copy_from_slice(c);
                        a
                    })
                    .collect();
                Self::new(coords, frame)
            }

            /// Translate the root joint to the origin.
            pub fn root_center(&self, topo: &SkeletonTopology) -> Result<Self> {
                if self.frame != Frame::Raw {
                    return Err(Error::FrameMismatch {
                        op: "root_center",
                        expected: "raw",
                        got: self.frame,
                    });
                }
                self.check_topology("root_center", topo)?;
                let root = self.coords[topo.root_index()];
                let coords = self
                    .coords
                    .iter()
                    .map(|c| {
                        let mut out = [0.0; $dim];
                        for d in 0..$dim {
                            out[d] = c[d] - root[d];
                        }
                        out
                    })
                    .collect();
                Ok(Self {
                    coords,
                    frame: Frame::RootCentered,
                })
            }

            /// `(x - mean) / std` per flattened coordinate.
            pub fn normalize(&self, stats: &NormalizationStats) -> Result<Self> {
                if self.frame != Frame::RootCentered {
                    return Err(Error::FrameMismatch {
                        op: "normalize",
                        expected: "root_centered",
                        got: self.frame,
                    });
                }
                let flat = self.flatten();
                if flat.len() != stats.dim() {
                    return Err(Error::DimMismatch {
                        op: "normalize",
                        expected: stats.dim(),
                        got: flat.len(),
                    });
                }
                let out: Vec<f64> = flat
                    .iter()
                    .zip(stats.mean.iter().zip(stats.std.iter()))
                    .map(|(x, (m, s))| (x - m) / s)
                    .collect();
                Self::from_flat(&out, Frame::Normalized)
            }

            /// Exact inverse of [`normalize`](Self::normalize).
            pub fn denormalize(&self, stats: &NormalizationStats) -> Result<Self> {
                if self.frame != Frame::Normalized {
                    return Err(Error::FrameMismatch {
                        op: "denormalize",
                        expected: "normalized",
                        got: self.frame,
                    });
                }
                let flat = self.flatten();
                if flat.len() != stats.dim() {
                    return Err(Error::DimMismatch {
                        op: "denormalize",
                        expected: stats.dim(),
                        got: flat.len(),
                    });
                }
                let out: Vec<f64> = flat
                    .iter()
                    .zip(stats.mean.iter().zip(stats.std.iter()))
                    .map(|(x, (m, s))| x * s + m)
                    .collect();
                Self::from_flat(&out, Frame::RootCentered)
            }

            pub(crate) fn check_topology(
                &self,
                op: &'static str,
                topo: &SkeletonTopology,
            ) -> Result<()> {
                if self.coords.len() != topo.joint_count() {
                    return Err(Error::JointCountMismatch {
                        op,
                        expected: topo.joint_count(),
                        got: self.coords.len(),
                    });
                }
                Ok(())
            }

            /// Same coordinates with a different frame tag. Callers are
            /// responsible for the tag being truthful; used where a frame is
            /// known by construction (e.g. generator output).
            pub fn with_frame(mut self, frame: Frame) -> Self {
                self.frame = frame;
                self
            }
        }
    };
}

pose_type!(Pose2D, 2, "A 2d pose: one (x, y) pair per joint in topology order.");
pose_type!(
    Pose3D,
    3,
    "A 3d pose: one (x, y, z) triple per joint in topology order."
);

impl Pose3D {
    /// Euclidean length of every bone, in `topo.bones()` order.
    ///
    /// Rejects normalized poses: anisotropic scaling makes lengths
    /// meaningless there.
    pub fn bone_lengths(&self, topo: &SkeletonTopology) -> Result<Vec<f64>> {
        if self.frame == Frame::Normalized {
            return Err(Error::FrameMismatch {
                op: "bone_lengths",
                expected: "raw or root_centered",
                got: self.frame,
            });
        }
        self.check_topology("bone_lengths", topo)?;
        Ok(topo
            .bones()
            .iter()
            .map(|&child| {
                let p = topo.parent(child).expect("bones have parents");
                let a = self.coords[child];
                let b = self.coords[p];
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
            })
            .collect())
    }
}

/// Per-coordinate mean and standard deviation over a training collection.
///
/// Standard deviations below `STD_CLAMP_FLOOR` are replaced by 1.0 so that
/// constant coordinates (the root after centering) survive the divide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_CLAMP_FLOOR: f64 = 1e-8;

impl NormalizationStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn fit_flat(op: &'static str, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput { op });
        }
        let dim = rows[0].len();
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimMismatch {
                    op,
                    expected: dim,
                    got: r.len(),
                });
            }
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        // Two-pass population standard deviation.
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s < STD_CLAMP_FLOOR {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    /// Fit over a collection of root-centered 2d poses.
    pub fn fit_2d(poses: &[Pose2D]) -> Result<Self> {
        for p in poses {
            if p.frame() != Frame::RootCentered {
                return Err(Error::FrameMismatch {
                    op: "fit_normalization",
                    expected: "root_centered",
                    got: p.frame(),
                });
            }
        }
        let rows: Vec<Vec<f64>> = poses.iter().map(|p| p.flatten()).collect();
        Self::fit_flat("fit_normalization", &rows)
    }

    /// Fit over a collection of root-centered 3d poses.
    pub fn fit_3d(poses: &[Pose3D]) -> Result<Self> {
        for p in poses {
            if p.frame() != Frame::RootCentered {
                return Err(Error::FrameMismatch {
                    op: "fit_normalization",
                    expected: "root_centered",
                    got: p.frame(),
                });
            }
        }
        let rows: Vec<Vec<f64>> = poses.iter().map(|p| p.flatten()).collect();
        Self::fit_flat("fit_normalization", &rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_pose3(rng: &mut impl Rng, scale: f64) -> Pose3D {
        let coords = (0..17)
            .map(|_| {
                [
                    rng.random_range(-scale..scale),
                    rng.random_range(-scale..scale),
                    rng.random_range(-scale..scale),
                ]
            })
            .collect();
        Pose3D::new(coords, Frame::Raw).unwrap()
    }

    #[test]
    fn default_topology_has_17_joints_and_16_bones() {
        let topo = SkeletonTopology::default_h36m17();
        assert_eq!(topo.joint_count(), 17);
        assert_eq!(topo.bone_count(), 16);
        assert_eq!(topo.root_index(), 0);
        assert_eq!(topo.joint_names()[topo.neck_index()], "neck");
        assert_eq!(topo.symmetric_segments().len(), 4);
        assert_eq!(topo.hip_joints(), Some((4, 1)));
    }

    #[test]
    fn topology_rejects_cycle_shaped_parent_tables() {
        // Parent-after-child declarations are the only way to write a cycle,
        // and they are rejected.
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let parent = vec![None, Some(2), Some(1)];
        let err = SkeletonTopology::new("bad", names, parent, vec![], 0, 0).unwrap_err();
        assert!(err.to_string().contains("declared after its parent"));
    }

    #[test]
    fn topology_rejects_second_root() {
        let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let err =
            SkeletonTopology::new("bad", names, vec![None, None], vec![], 0, 0).unwrap_err();
        assert!(err.to_string().contains("not the root"));
    }

    #[test]
    fn topology_text_round_trip() {
        let topo = SkeletonTopology::default_h36m17();
        let text = topo.to_text();
        let parsed = SkeletonTopology::from_text(&text).unwrap();
        assert_eq!(topo, parsed);
        // Second serialization is byte-identical.
        assert_eq!(text, parsed.to_text());
    }

    #[test]
    fn topology_text_rejects_wrong_version() {
        let err = SkeletonTopology::from_text("poselift-topology v9\nname x\n").unwrap_err();
        assert!(err.to_string().contains("version 9"));
    }

    #[test]
    fn root_center_translates_root_to_origin() {
        let topo = SkeletonTopology::default_h36m17();
        let mut coords = vec![[0.0, 0.0]; 17];
        coords[0] = [100.0, 200.0];
        coords[5] = [130.0, 260.0];
        let pose = Pose2D::new(coords, Frame::Raw).unwrap();
        let centered = pose.root_center(&topo).unwrap();
        assert_eq!(centered.frame(), Frame::RootCentered);
        assert_eq!(centered.coords()[0], [0.0, 0.0]);
        assert_eq!(centered.coords()[5], [30.0, 60.0]);
        // Joint 1 started at (0,0) so it moves to (-100, -200).
        assert_eq!(centered.coords()[1], [-100.0, -200.0]);
    }

    #[test]
    fn root_center_on_already_origin_pose_only_retags() {
        let topo = SkeletonTopology::default_h36m17();
        let coords: Vec<[f64; 3]> = (0..17).map(|j| [j as f64, 0.0, -(j as f64)]).collect();
        let mut at_origin = coords.clone();
        for c in &mut at_origin {
            // root is joint 0 at (0,0,0) already
            let _ = c;
        }
        let pose = Pose3D::new(coords.clone(), Frame::Raw).unwrap();
        let centered = pose.root_center(&topo).unwrap();
        assert_eq!(centered.coords(), &coords[..]);
    }

    #[test]
    fn root_center_requires_raw_frame() {
        let topo = SkeletonTopology::default_h36m17();
        let pose = Pose3D::new(vec![[0.0; 3]; 17], Frame::RootCentered).unwrap();
        assert!(matches!(
            pose.root_center(&topo),
            Err(Error::FrameMismatch { .. })
        ));
    }

    #[test]
    fn root_center_preserves_pairwise_distances() {
        let topo = SkeletonTopology::default_h36m17();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pose = random_pose3(&mut rng, 500.0);
        let centered = pose.root_center(&topo).unwrap();
        for i in 0..17 {
            for j in (i + 1)..17 {
                let d = |p: &Pose3D| {
                    let a = p.coords()[i];
                    let b = p.coords()[j];
                    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
                };
                assert!((d(&pose) - d(&centered)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fit_normalization_zero_variance_clamps_std() {
        let topo = SkeletonTopology::default_h36m17();
        let pose = Pose3D::new(vec![[0.0; 3]; 17], Frame::Raw)
            .unwrap()
            .root_center(&topo)
            .unwrap();
        let stats = NormalizationStats::fit_3d(&[pose.clone(), pose.clone(), pose]).unwrap();
        assert!(stats.std.iter().all(|&s| s == 1.0));
        assert!(stats.mean.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn fit_normalization_symmetric_pair_has_zero_mean() {
        let topo = SkeletonTopology::default_h36m17();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw = random_pose3(&mut rng, 100.0);
        let a = {
            let mut c = raw.coords().to_vec();
            c[0] = [0.0; 3]; // root at origin so centering is a no-op shift
            Pose3D::new(c, Frame::Raw).unwrap().root_center(&topo).unwrap()
        };
        let negated: Vec<[f64; 3]> = a.coords().iter().map(|c| [-c[0], -c[1], -c[2]]).collect();
        let b = Pose3D::new(negated, Frame::RootCentered).unwrap();
        let stats = NormalizationStats::fit_3d(&[a, b]).unwrap();
        assert!(stats.mean.iter().all(|&m| m.abs() < 1e-12));
    }

    #[test]
    fn fit_normalization_matches_two_pass_oracle() {
        let topo = SkeletonTopology::default_h36m17();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let poses: Vec<Pose3D> = (0..100)
            .map(|_| random_pose3(&mut rng, 300.0).root_center(&topo).unwrap())
            .collect();
        let stats = NormalizationStats::fit_3d(&poses).unwrap();

        // Scalar-loop oracle, coordinate by coordinate.
        let flats: Vec<Vec<f64>> = poses.iter().map(|p| p.flatten()).collect();
        for d in 0..51 {
            let xs: Vec<f64> = flats.iter().map(|f| f[d]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
            let std = var.sqrt();
            let expect_std = if std < STD_CLAMP_FLOOR { 1.0 } else { std };
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
            if mean.abs() > 1e-12 {
                assert!(rel(stats.mean[d], mean) < 1e-10, "mean at {d}");
            }
            if (expect_std - 1.0).abs() > 1e-12 {
                assert!(rel(stats.std[d], expect_std) < 1e-10, "std at {d}");
            }
        }
    }

    #[test]
    fn fit_normalization_rejects_empty() {
        assert!(matches!(
            NormalizationStats::fit_3d(&[]),
            Err(Error::EmptyInput { .. })
        ));
    }

    #[test]
    fn normalize_denormalize_round_trip() {
        let topo = SkeletonTopology::default_h36m17();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let poses: Vec<Pose3D> = (0..20)
            .map(|_| random_pose3(&mut rng, 400.0).root_center(&topo).unwrap())
            .collect();
        let stats = NormalizationStats::fit_3d(&poses).unwrap();
        for p in &poses {
            let round = p.normalize(&stats).unwrap().denormalize(&stats).unwrap();
            for (a, b) in p.flatten().iter().zip(round.flatten()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalize_of_mean_pose_is_zero() {
        let stats = NormalizationStats {
            mean: vec![3.0; 34],
            std: vec![2.0; 34],
        };
        let pose = Pose2D::from_flat(&vec![3.0; 34], Frame::RootCentered).unwrap();
        let normed = pose.normalize(&stats).unwrap();
        assert!(normed.flatten().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalize_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let flat: Vec<f64> = (0..34).map(|_| rng.random_range(-10.0..10.0)).collect();
        let mean: Vec<f64> = (0..34).map(|_| rng.random_range(-5.0..5.0)).collect();
        let std: Vec<f64> = (0..34).map(|_| rng.random_range(0.5..3.0)).collect();
        let stats = NormalizationStats {
            mean: mean.clone(),
            std: std.clone(),
        };
        let pose = Pose2D::from_flat(&flat, Frame::RootCentered).unwrap();
        let normed = pose.normalize(&stats).unwrap().flatten();
        for d in 0..34 {
            let expect = (flat[d] - mean[d]) / std[d];
            assert!((normed[d] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_dim_mismatch() {
        let stats = NormalizationStats {
            mean: vec![0.0; 10],
            std: vec![1.0; 10],
        };
        let pose = Pose2D::from_flat(&vec![0.0; 34], Frame::RootCentered).unwrap();
        assert!(matches!(
            pose.normalize(&stats),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn bone_lengths_zero_for_coincident_joints() {
        let topo = SkeletonTopology::default_h36m17();
        let pose = Pose3D::new(vec![[5.0, 5.0, 5.0]; 17], Frame::Raw).unwrap();
        let lengths = pose.bone_lengths(&topo).unwrap();
        assert!(lengths.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn bone_lengths_match_constructed_offsets() {
        let topo = SkeletonTopology::default_h36m17();
        // Chain each joint 10mm along x past its parent.
        let mut coords = vec![[0.0; 3]; 17];
        for j in 1..17 {
            let p = topo.parent(j).unwrap();
            coords[j] = [coords[p][0] + 10.0, coords[p][1], coords[p][2]];
        }
        let pose = Pose3D::new(coords, Frame::Raw).unwrap();
        let lengths = pose.bone_lengths(&topo).unwrap();
        assert!(lengths.iter().all(|&l| (l - 10.0).abs() < 1e-12));
    }

    #[test]
    fn bone_lengths_match_sqrt_oracle() {
        let topo = SkeletonTopology::default_h36m17();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pose = random_pose3(&mut rng, 250.0);
        let lengths = pose.bone_lengths(&topo).unwrap();
        for (k, &child) in topo.bones().iter().enumerate() {
            let p = topo.parent(child).unwrap();
            let a = pose.coords()[child];
            let b = pose.coords()[p];
            let mut sq = 0.0;
            for d in 0..3 {
                sq += (a[d] - b[d]) * (a[d] - b[d]);
            }
            let rel = (lengths[k] - sq.sqrt()).abs() / sq.sqrt().max(1e-300);
            assert!(rel < 1e-10);
        }
    }

    #[test]
    fn bone_lengths_reject_normalized_frame() {
        let topo = SkeletonTopology::default_h36m17();
        let pose = Pose3D::new(vec![[0.0; 3]; 17], Frame::Normalized).unwrap();
        assert!(matches!(
            pose.bone_lengths(&topo),
            Err(Error::FrameMismatch { .. })
        ));
    }

    #[test]
    fn pose_rejects_non_finite() {
        let mut coords = vec![[0.0, 0.0]; 17];
        coords[3][1] = f64::NAN;
        assert!(matches!(
            Pose2D::new(coords, Frame::Raw),
            Err(Error::NonFinite { .. })
        ));
    }
}
