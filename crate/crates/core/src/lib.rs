//! Lifts 2d human poses to 3d with a pair of small residual dense networks —
//! a 2d→3d lifter and a learned 3d→2d re-projector — trained together so the
//! re-projection and skeleton-symmetry terms supervise samples that carry no
//! 3d ground truth. Ships with a synthetic skeleton generator, a documented
//! pose-file format, a three-phase training pipeline with deterministic
//! checkpointing, and the standard 3d-pose evaluation metrics.

pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod skeleton;

pub use error::{Error, Result};
pub use skeleton::{Frame, NormalizationStats, Pose2D, Pose3D, SkeletonTopology};
