//! Training data: synthetic generation, camera projection, 2d augmentation,
//! the pose-file format, and mixed-source batch assembly.

mod batching;
mod posefile;
mod synth;

pub use batching::{make_batches, make_index_batches};
pub use posefile::{load_poses, save_poses, POSE_FILE_FORMAT, POSE_FILE_VERSION};
pub use synth::generate_synthetic;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{Frame, Pose2D, Pose3D};

/// One training example: an observed 2d pose, optionally its 3d ground
/// truth, a per-joint annotation mask, and the dataset tag it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub y2d: Pose2D,
    pub y3d: Option<Pose3D>,
    pub visibility: Vec<bool>,
    pub source_tag: String,
}

impl Sample {
    pub fn has_3d_gt(&self) -> bool {
        self.y3d.is_some()
    }

    pub fn all_visible(&self) -> bool {
        self.visibility.iter().all(|&v| v)
    }
}

/// Camera used by the synthetic generator. The learned re-projector never
/// sees these parameters; they only produce consistent (y2d, y3d) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CameraKind {
    Orthographic,
    Pinhole { focal_px: f64, principal_px: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    #[serde(flatten)]
    pub kind: CameraKind,
    /// Nominal subject-to-camera distance in millimeters; the generator
    /// jitters around it and must keep it larger than the skeleton extent.
    pub distance_mm: f64,
}

impl CameraModel {
    pub fn orthographic(distance_mm: f64) -> Result<Self> {
        if distance_mm <= 0.0 {
            return Err(Error::Invalid {
                op: "CameraModel",
                msg: format!("subject distance {distance_mm} must be positive"),
            });
        }
        Ok(Self {
            kind: CameraKind::Orthographic,
            distance_mm,
        })
    }

    pub fn pinhole(focal_px: f64, principal_px: [f64; 2], distance_mm: f64) -> Result<Self> {
        if focal_px <= 0.0 {
            return Err(Error::Invalid {
                op: "CameraModel",
                msg: format!("focal length {focal_px} must be positive"),
            });
        }
        if !principal_px.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                op: "CameraModel",
                what: "principal point".into(),
            });
        }
        if distance_mm <= 0.0 {
            return Err(Error::Invalid {
                op: "CameraModel",
                msg: format!("subject distance {distance_mm} must be positive"),
            });
        }
        Ok(Self {
            kind: CameraKind::Pinhole {
                focal_px,
                principal_px,
            },
            distance_mm,
        })
    }

    /// Project a metric 3d pose to 2d pixels.
    ///
    /// Orthographic drops z; pinhole applies the perspective divide and
    /// requires every joint strictly in front of the camera plane.
    pub fn project(&self, pose: &Pose3D) -> Result<Pose2D> {
        if pose.frame() == Frame::Normalized {
            return Err(Error::FrameMismatch {
                op: "project",
                expected: "raw or root_centered",
                got: pose.frame(),
            });
        }
        let coords = match self.kind {
            CameraKind::Orthographic => pose.coords().iter().map(|c| [c[0], c[1]]).collect(),
            CameraKind::Pinhole {
                focal_px,
                principal_px,
            } => {
                let mut out = Vec::with_capacity(pose.joint_count());
                for (j, c) in pose.coords().iter().enumerate() {
                    if c[2] <= 0.0 {
                        return Err(Error::Invalid {
                            op: "project",
                            msg: format!(
                                "joint {j} at depth {} is at or behind the camera plane",
                                c[2]
                            ),
                        });
                    }
                    out.push([
                        focal_px * c[0] / c[2] + principal_px[0],
                        focal_px * c[1] / c[2] + principal_px[1],
                    ]);
                }
                out
            }
        };
        Pose2D::new(coords, Frame::Raw)
    }
}

/// In-plane rotation and isotropic scaling applied to 2d poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    /// Rotations are drawn uniformly from ±this many degrees.
    pub rotation_deg: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub copies: usize,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            rotation_deg: 30.0,
            scale_min: 0.8,
            scale_max: 1.2,
            copies: 35,
        }
    }
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rotation_deg < 0.0 {
            return Err(Error::Invalid {
                op: "AugmentationSpec",
                msg: format!("rotation range {} is negative", self.rotation_deg),
            });
        }
        if self.scale_min <= 0.0 || self.scale_max < self.scale_min {
            return Err(Error::Invalid {
                op: "AugmentationSpec",
                msg: format!(
                    "scale range [{}, {}] must be positive and ordered",
                    self.scale_min, self.scale_max
                ),
            });
        }
        Ok(())
    }
}

/// Produce `spec.copies` rotated/scaled variants of a root-centered 2d pose.
///
/// The copies deliberately drop the 3d ground truth so they exercise the
/// 2d-only training path; visibility carries over unchanged.
pub fn augment_2d(sample: &Sample, spec: &AugmentationSpec, seed: u64) -> Result<Vec<Sample>> {
    spec.validate()?;
    if sample.y2d.frame() != Frame::RootCentered {
        return Err(Error::FrameMismatch {
            op: "augment_2d",
            expected: "root_centered",
            got: sample.y2d.frame(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.copies);
    for _ in 0..spec.copies {
        let angle = if spec.rotation_deg > 0.0 {
            rng.random_range(-spec.rotation_deg..spec.rotation_deg)
                .to_radians()
        } else {
            0.0
        };
        let scale = if spec.scale_max > spec.scale_min {
            rng.random_range(spec.scale_min..spec.scale_max)
        } else {
            spec.scale_min
        };
        let (s, c) = angle.sin_cos();
        let coords: Vec<[f64; 2]> = sample
            .y2d
            .coords()
            .iter()
            .map(|p| {
                [
                    scale * (c * p[0] - s * p[1]),
                    scale * (s * p[0] + c * p[1]),
                ]
            })
            .collect();
        out.push(Sample {
            y2d: Pose2D::new(coords, Frame::RootCentered)?,
            y3d: None,
            visibility: sample.visibility.clone(),
            source_tag: sample.source_tag.clone(),
        });
    }
    Ok(out)
}
