//! Forward-kinematic synthetic skeletons, a stand-in for motion-capture
//! training data. Plausibility, not realism, is the bar: limbs move inside
//! fixed anatomical cones, bone lengths are mirror-symmetric per subject, and
//! every sample's y2d is its y3d projected through the generator's camera.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{CameraModel, Sample};
use crate::error::{Error, Result};
use crate::skeleton::{Frame, Pose3D, SkeletonTopology};

/// Base bone lengths in millimeters, keyed by the bone's child joint.
const BASE_LENGTHS: &[(&str, f64)] = &[
    ("right_hip", 130.0),
    ("left_hip", 130.0),
    ("right_knee", 450.0),
    ("left_knee", 450.0),
    ("right_ankle", 440.0),
    ("left_ankle", 440.0),
    ("spine", 230.0),
    ("neck", 250.0),
    ("nose", 100.0),
    ("head", 110.0),
    ("left_shoulder", 150.0),
    ("right_shoulder", 150.0),
    ("left_elbow", 280.0),
    ("right_elbow", 280.0),
    ("left_wrist", 250.0),
    ("right_wrist", 250.0),
];

/// Joint-angle ranges per pose family; the family name becomes the sample's
/// source tag so evaluation can break results down by "activity".
struct Family {
    tag: &'static str,
    torso_cone: f64,
    hip_flex: (f64, f64),
    knee_flex: (f64, f64),
    arm_cone: f64,
    elbow_flex: (f64, f64),
}

const FAMILIES: &[Family] = &[
    Family {
        tag: "stand",
        torso_cone: 10.0,
        hip_flex: (0.0, 25.0),
        knee_flex: (0.0, 25.0),
        arm_cone: 40.0,
        elbow_flex: (5.0, 60.0),
    },
    Family {
        tag: "sit",
        torso_cone: 25.0,
        hip_flex: (55.0, 95.0),
        knee_flex: (60.0, 110.0),
        arm_cone: 50.0,
        elbow_flex: (10.0, 80.0),
    },
    Family {
        tag: "reach",
        torso_cone: 20.0,
        hip_flex: (0.0, 40.0),
        knee_flex: (0.0, 50.0),
        arm_cone: 85.0,
        elbow_flex: (5.0, 110.0),
    },
];

type Vec3 = [f64; 3];

fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn unit(v: Vec3) -> Vec3 {
    let n = norm(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Rodrigues rotation of `v` about the unit `axis` by `angle` radians.
fn rotate(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    let k = axis;
    let kxv = cross(k, v);
    let dot = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
    [
        v[0] * c + kxv[0] * s + k[0] * dot * (1.0 - c),
        v[1] * c + kxv[1] * s + k[1] * dot * (1.0 - c),
        v[2] * c + kxv[2] * s + k[2] * dot * (1.0 - c),
    ]
}

/// A unit vector drawn uniformly (by solid angle) inside the cone of
/// half-angle `max_deg` around `dir`.
fn sample_cone(rng: &mut impl Rng, dir: Vec3, max_deg: f64) -> Vec3 {
    if max_deg <= 0.0 {
        return unit(dir);
    }
    let dir = unit(dir);
    let cos_max = max_deg.to_radians().cos();
    let cos_t = 1.0 - rng.random::<f64>() * (1.0 - cos_max);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let psi = rng.random_range(0.0..std::f64::consts::TAU);
    // Any vector not parallel to dir seeds the orthonormal frame.
    let helper = if dir[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let e1 = unit(cross(dir, helper));
    let e2 = cross(dir, e1);
    [
        cos_t * dir[0] + sin_t * (psi.cos() * e1[0] + psi.sin() * e2[0]),
        cos_t * dir[1] + sin_t * (psi.cos() * e1[1] + psi.sin() * e2[1]),
        cos_t * dir[2] + sin_t * (psi.cos() * e1[2] + psi.sin() * e2[2]),
    ]
}

struct Lengths {
    by_joint: Vec<f64>,
}

impl Lengths {
    fn subject(topo: &SkeletonTopology, scale: f64) -> Result<Self> {
        let mut by_joint = vec![0.0; topo.joint_count()];
        for (name, len) in BASE_LENGTHS {
            let idx = topo.joint_index(name).ok_or_else(|| Error::Invalid {
                op: "generate_synthetic",
                msg: format!("topology lacks joint '{name}' required by the generator"),
            })?;
            by_joint[idx] = len * scale;
        }
        Ok(Self { by_joint })
    }
}

/// Generate `count` consistent (y2d, y3d) samples.
///
/// Coordinates are camera-frame millimeters: x right, y down, z depth. Per
/// sample the skeleton gets a fresh subject scale (±10%), uniform yaw, a
/// ±10% jitter on the camera distance, and joint angles from one of the pose
/// families. Deterministic for a given seed.
pub fn generate_synthetic(
    count: usize,
    seed: u64,
    camera: &CameraModel,
    topo: &SkeletonTopology,
) -> Result<Vec<Sample>> {
    if count == 0 {
        return Err(Error::EmptyInput {
            op: "generate_synthetic",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let family = &FAMILIES[rng.random_range(0..FAMILIES.len())];
        let scale = rng.random_range(0.9..1.1);
        let lengths = Lengths::subject(topo, scale)?;
        let local = build_pose(&mut rng, topo, &lengths, family)?;

        // Global placement: yaw about the vertical axis, lateral offset,
        // distance jitter.
        let yaw = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = yaw.sin_cos();
        let offset = [
            rng.random_range(-150.0..150.0),
            rng.random_range(-150.0..150.0),
            camera.distance_mm * rng.random_range(0.9..1.1),
        ];
        let world: Vec<[f64; 3]> = local
            .iter()
            .map(|p| {
                [
                    c * p[0] + s * p[2] + offset[0],
                    p[1] + offset[1],
                    -s * p[0] + c * p[2] + offset[2],
                ]
            })
            .collect();

        // The camera must sit outside the skeleton's reach.
        let extent = world
            .iter()
            .map(|p| norm([p[0] - offset[0], p[1] - offset[1], p[2] - offset[2]]))
            .fold(0.0, f64::max);
        if camera.distance_mm * 0.9 - 150.0 <= extent {
            return Err(Error::Invalid {
                op: "generate_synthetic",
                msg: format!(
                    "camera distance {} too small for skeleton extent {extent:.0}",
                    camera.distance_mm
                ),
            });
        }

        let y3d = Pose3D::new(world, Frame::Raw)?;
        let y2d = camera.project(&y3d)?;
        out.push(Sample {
            y2d,
            y3d: Some(y3d),
            visibility: vec![true; topo.joint_count()],
            source_tag: family.tag.to_string(),
        });
    }
    Ok(out)
}

/// Build one skeleton in its local frame: pelvis at the origin, y down,
/// z toward the camera when yaw is zero.
fn build_pose(
    rng: &mut impl Rng,
    topo: &SkeletonTopology,
    lengths: &Lengths,
    family: &Family,
) -> Result<Vec<Vec3>> {
    let idx = |name: &str| -> Result<usize> {
        topo.joint_index(name).ok_or_else(|| Error::Invalid {
            op: "generate_synthetic",
            msg: format!("topology lacks joint '{name}' required by the generator"),
        })
    };
    let mut pos = vec![[0.0; 3]; topo.joint_count()];
    let len = |j: usize| lengths.by_joint[j];
    let place = |pos: &mut Vec<Vec3>, child: usize, parent: usize, dir: Vec3| {
        let d = unit(dir);
        let l = len(child);
        pos[child] = [
            pos[parent][0] + d[0] * l,
            pos[parent][1] + d[1] * l,
            pos[parent][2] + d[2] * l,
        ];
    };
    let pelvis = idx("pelvis")?;
    let spine = idx("spine")?;
    let neck = idx("neck")?;
    let nose = idx("nose")?;
    let head = idx("head")?;

    // Torso chain.
    let up = [0.0, -1.0, 0.0];
    let torso_dir = sample_cone(rng, up, family.torso_cone);
    place(&mut pos, spine, pelvis, torso_dir);
    let neck_dir = sample_cone(rng, torso_dir, 10.0);
    place(&mut pos, neck, spine, neck_dir);
    let nose_dir = sample_cone(rng, [0.0, -0.55, 0.83], 20.0);
    place(&mut pos, nose, neck, nose_dir);
    let head_dir = sample_cone(rng, [0.0, -0.92, -0.38], 15.0);
    place(&mut pos, head, nose, head_dir);

    // Shoulders hang off the neck laterally.
    for (side, sign) in [("left", 1.0), ("right", -1.0)] {
        let shoulder = idx(&format!("{side}_shoulder"))?;
        let elbow = idx(&format!("{side}_elbow"))?;
        let wrist = idx(&format!("{side}_wrist"))?;
        let sh_dir = sample_cone(rng, [sign * 0.98, 0.17, 0.0], 8.0);
        place(&mut pos, shoulder, neck, sh_dir);
        // Upper arm within the family cone around straight down.
        let ua_dir = sample_cone(rng, [0.0, 1.0, 0.0], family.arm_cone);
        place(&mut pos, elbow, shoulder, ua_dir);
        // Elbow flexion bends the forearm toward the body's forward axis.
        let flex = rng
            .random_range(family.elbow_flex.0..family.elbow_flex.1)
            .to_radians();
        let axis = unit(sample_cone(rng, [1.0, 0.0, 0.0], 25.0));
        let fa_dir = rotate(ua_dir, axis, flex);
        place(&mut pos, wrist, elbow, fa_dir);
    }

    // Legs: hips are rigid offsets from the pelvis; knees flex backward.
    for (side, sign) in [("left", 1.0), ("right", -1.0)] {
        let hip = idx(&format!("{side}_hip"))?;
        let knee = idx(&format!("{side}_knee"))?;
        let ankle = idx(&format!("{side}_ankle"))?;
        let hip_dir = sample_cone(rng, [sign * 1.0, 0.15, 0.0], 5.0);
        place(&mut pos, hip, pelvis, hip_dir);
        // Hip flexion swings the thigh forward (toward +z).
        let hip_flex = rng
            .random_range(family.hip_flex.0..family.hip_flex.1)
            .to_radians();
        let abduct = rng.random_range(-12.0..12.0_f64).to_radians();
        let thigh_dir = rotate(rotate([0.0, 1.0, 0.0], [1.0, 0.0, 0.0], hip_flex), [0.0, 0.0, 1.0], abduct);
        place(&mut pos, knee, hip, thigh_dir);
        // Knee flexion folds the shin back relative to the thigh.
        let knee_flex = rng
            .random_range(family.knee_flex.0..family.knee_flex.1)
            .to_radians();
        let axis = unit(sample_cone(rng, [1.0, 0.0, 0.0], 10.0));
        let shin_dir = rotate(thigh_dir, axis, -knee_flex);
        place(&mut pos, ankle, knee, shin_dir);
    }

    Ok(pos)
}
