//! The line-delimited pose-file format.
//!
//! Line 1 is a self-describing JSON header naming the format version, the
//! topology, the coordinate frames, and units; every following line is one
//! sample record. Unknown fields are rejected so that format drift surfaces
//! as a versioned error instead of silent data loss.
//!
//! A 2d joint may be written as `null` only when an explicit visibility array
//! marks it invisible; it loads as (0, 0) with its mask bit cleared.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, PoseFileError, Result};
use crate::skeleton::{Frame, Pose2D, Pose3D, SkeletonTopology};

pub const POSE_FILE_FORMAT: &str = "poselift-poses";
pub const POSE_FILE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    topology: String,
    joints: usize,
    frame_2d: Frame,
    frame_3d: Frame,
    units_2d: String,
    units_3d: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    y2d: Vec<Option<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y3d: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    visibility: Option<Vec<bool>>,
    source_tag: String,
}

fn file_err(path: &Path, kind: PoseFileError) -> Error {
    Error::PoseFile {
        path: path.display().to_string(),
        kind,
    }
}

/// Write samples in the documented format. All samples must share frames;
/// normalized poses are not writable (their units are model-specific).
pub fn save_poses(
    path: &Path,
    samples: &[Sample],
    topo: &SkeletonTopology,
    provenance: Option<serde_json::Value>,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyInput { op: "save_poses" });
    }
    let frame_2d = samples[0].y2d.frame();
    let frame_3d = samples[0]
        .y3d
        .as_ref()
        .map(|p| p.frame())
        .unwrap_or(Frame::Raw);
    for (i, s) in samples.iter().enumerate() {
        if s.y2d.frame() != frame_2d
            || s.y3d.as_ref().is_some_and(|p| p.frame() != frame_3d)
        {
            return Err(file_err(
                path,
                PoseFileError::Record {
                    index: i,
                    msg: "mixed frames within one file".into(),
                },
            ));
        }
        if s.y2d.frame() == Frame::Normalized
            || s.y3d.as_ref().is_some_and(|p| p.frame() == Frame::Normalized)
        {
            return Err(file_err(
                path,
                PoseFileError::Record {
                    index: i,
                    msg: "normalized poses cannot be saved".into(),
                },
            ));
        }
        if s.y2d.joint_count() != topo.joint_count()
            || s.visibility.len() != topo.joint_count()
            || s.y3d.as_ref().is_some_and(|p| p.joint_count() != topo.joint_count())
        {
            return Err(file_err(
                path,
                PoseFileError::Record {
                    index: i,
                    msg: "joint count does not match topology".into(),
                },
            ));
        }
    }

    let header = Header {
        format: POSE_FILE_FORMAT.into(),
        version: POSE_FILE_VERSION,
        topology: topo.name().into(),
        joints: topo.joint_count(),
        frame_2d,
        frame_3d,
        units_2d: "px".into(),
        units_3d: "mm".into(),
        provenance,
    };
    let mut out = Vec::new();
    out.extend_from_slice(serde_json::to_string(&header).expect("header serializes").as_bytes());
    out.push(b'\n');
    for s in samples {
        let record = Record {
            y2d: s.y2d.coords().iter().map(|c| Some(*c)).collect(),
            y3d: s.y3d.as_ref().map(|p| p.coords().to_vec()),
            visibility: if s.all_visible() {
                None
            } else {
                Some(s.visibility.clone())
            },
            source_tag: s.source_tag.clone(),
        };
        out.extend_from_slice(
            serde_json::to_string(&record)
                .expect("record serializes")
                .as_bytes(),
        );
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a pose file, validating it against the expected topology. Typed
/// failures name the offending record index.
pub fn load_poses(path: &Path, topo: &SkeletonTopology) -> Result<Vec<Sample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = std::io::BufReader::new(file).lines();

    let header_line = match lines.next() {
        Some(Ok(l)) => l,
        Some(Err(e)) => return Err(Error::io(path, e)),
        None => return Err(file_err(path, PoseFileError::MissingHeader)),
    };
    let header: Header = serde_json::from_str(&header_line)
        .map_err(|e| file_err(path, PoseFileError::Header(e.to_string())))?;
    if header.format != POSE_FILE_FORMAT {
        return Err(file_err(path, PoseFileError::MissingHeader));
    }
    if header.version != POSE_FILE_VERSION {
        return Err(file_err(
            path,
            PoseFileError::Version {
                got: header.version,
                supported: POSE_FILE_VERSION,
            },
        ));
    }
    if header.topology != topo.name() || header.joints != topo.joint_count() {
        return Err(file_err(
            path,
            PoseFileError::TopologyMismatch {
                file_topology: header.topology,
                file_joints: header.joints,
                expected_topology: topo.name().into(),
                expected_joints: topo.joint_count(),
            },
        ));
    }

    let mut samples = Vec::new();
    for (index, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| {
            file_err(
                path,
                PoseFileError::Record {
                    index,
                    msg: e.to_string(),
                },
            )
        })?;
        if record.y2d.len() != topo.joint_count() {
            return Err(file_err(
                path,
                PoseFileError::Record {
                    index,
                    msg: format!(
                        "y2d has {} joints, topology has {}",
                        record.y2d.len(),
                        topo.joint_count()
                    ),
                },
            ));
        }
        let mut visibility = record
            .visibility
            .unwrap_or_else(|| vec![true; topo.joint_count()]);
        if visibility.len() != topo.joint_count() {
            return Err(file_err(
                path,
                PoseFileError::Record {
                    index,
                    msg: format!("visibility has {} entries", visibility.len()),
                },
            ));
        }
        let mut coords = Vec::with_capacity(topo.joint_count());
        for (joint, entry) in record.y2d.iter().enumerate() {
            match entry {
                Some(c) => {
                    if !c.iter().all(|v| v.is_finite()) {
                        return Err(file_err(
                            path,
                            PoseFileError::NonFiniteRecord { index, joint },
                        ));
                    }
                    coords.push(*c);
                }
                None => {
                    if visibility[joint] {
                        return Err(file_err(
                            path,
                            PoseFileError::Record {
                                index,
                                msg: format!(
                                    "joint {joint} is missing but not masked invisible"
                                ),
                            },
                        ));
                    }
                    coords.push([0.0, 0.0]);
                    visibility[joint] = false;
                }
            }
        }
        let y2d = Pose2D::new(coords, header.frame_2d).map_err(|_| {
            file_err(path, PoseFileError::Record {
                index,
                msg: "invalid 2d pose".into(),
            })
        })?;
        let y3d = match record.y3d {
            None => None,
            Some(c) => {
                if c.len() != topo.joint_count() {
                    return Err(file_err(
                        path,
                        PoseFileError::Record {
                            index,
                            msg: format!("y3d has {} joints", c.len()),
                        },
                    ));
                }
                if let Some(joint) = c
                    .iter()
                    .position(|t| !t.iter().all(|v| v.is_finite()))
                {
                    return Err(file_err(
                        path,
                        PoseFileError::NonFiniteRecord { index, joint },
                    ));
                }
                Some(Pose3D::new(c, header.frame_3d).expect("finiteness checked"))
            }
        };
        samples.push(Sample {
            y2d,
            y3d,
            visibility,
            source_tag: record.source_tag,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, CameraModel};

    fn setup() -> (SkeletonTopology, Vec<Sample>, tempfile::TempDir) {
        let topo = SkeletonTopology::default_h36m17();
        let cam = CameraModel::pinhole(1100.0, [500.0, 500.0], 3200.0).unwrap();
        let samples = generate_synthetic(12, 4, &cam, &topo).unwrap();
        (topo, samples, tempfile::tempdir().unwrap())
    }

    #[test]
    fn save_load_round_trip_is_structurally_identical() {
        let (topo, samples, dir) = setup();
        let path = dir.path().join("poses.jsonl");
        save_poses(&path, &samples, &topo, None).unwrap();
        let loaded = load_poses(&path, &topo).unwrap();
        assert_eq!(samples, loaded);
    }

    #[test]
    fn round_trip_is_byte_stable_across_two_cycles() {
        let (topo, samples, dir) = setup();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        save_poses(&p1, &samples, &topo, None).unwrap();
        let once = load_poses(&p1, &topo).unwrap();
        save_poses(&p2, &once, &topo, None).unwrap();
        let bytes1 = std::fs::read(&p1).unwrap();
        let bytes2 = std::fs::read(&p2).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn wrong_joint_count_is_a_topology_mismatch() {
        let (topo, samples, dir) = setup();
        let path = dir.path().join("poses.jsonl");
        save_poses(&path, &samples, &topo, None).unwrap();
        // A 16-joint topology reading a 17-joint file.
        let mut names = topo.joint_names().to_vec();
        names.pop();
        let mut parent: Vec<Option<usize>> = (0..16).map(|j| topo.parent(j)).collect();
        parent[0] = None;
        let smaller = SkeletonTopology::new("h36m16", names, parent, vec![], 0, 8).unwrap();
        let err = load_poses(&path, &smaller).unwrap_err();
        assert!(err.to_string().contains("topology mismatch"), "{err}");
    }

    #[test]
    fn nan_coordinate_is_rejected_naming_the_record() {
        let (topo, samples, dir) = setup();
        let path = dir.path().join("poses.jsonl");
        save_poses(&path, &samples, &topo, None).unwrap();
        let mut content = std::fs::read_to_string(&path).unwrap();
        // Corrupt the third record (line index 3 = record 2).
        let lines: Vec<&str> = content.lines().collect();
        let corrupted = lines[3].replacen(char::is_numeric, "NaN", 1);
        let mut new_lines = lines.clone();
        new_lines[3] = &corrupted;
        content = new_lines.join("\n");
        std::fs::write(&path, content).unwrap();
        let err = load_poses(&path, &topo).unwrap_err();
        assert!(err.to_string().contains("record 2"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let (topo, samples, dir) = setup();
        let path = dir.path().join("poses.jsonl");
        save_poses(&path, &samples, &topo, None).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        let patched = content.replacen("{\"y2d\"", "{\"mystery\":1,\"y2d\"", 1);
        std::fs::write(&path, patched).unwrap();
        let err = load_poses(&path, &topo).unwrap_err();
        assert!(err.to_string().contains("mystery"), "{err}");
    }

    #[test]
    fn missing_joint_without_mask_is_rejected() {
        let (topo, _, dir) = setup();
        let path = dir.path().join("poses.jsonl");
        let header = format!(
            "{{\"format\":\"poselift-poses\",\"version\":1,\"topology\":\"h36m17\",\"joints\":17,\"frame_2d\":\"raw\",\"frame_3d\":\"raw\",\"units_2d\":\"px\",\"units_3d\":\"mm\"}}\n"
        );
        let coords: Vec<&str> = std::iter::once("null")
            .chain(std::iter::repeat("[1.0,2.0]").take(16))
            .collect();
        let record = format!(
            "{{\"y2d\":[{}],\"source_tag\":\"t\"}}\n",
            coords.join(",")
        );
        std::fs::write(&path, format!("{header}{record}")).unwrap();
        let err = load_poses(&path, &topo).unwrap_err();
        assert!(err.to_string().contains("not masked invisible"), "{err}");

        // With the joint masked invisible it loads as (0, 0).
        let vis: Vec<&str> = std::iter::once("false")
            .chain(std::iter::repeat("true").take(16))
            .collect();
        let record = format!(
            "{{\"y2d\":[{}],\"visibility\":[{}],\"source_tag\":\"t\"}}\n",
            coords.join(","),
            vis.join(",")
        );
        std::fs::write(&path, format!("{header}{record}")).unwrap();
        let loaded = load_poses(&path, &topo).unwrap();
        assert_eq!(loaded[0].y2d.coords()[0], [0.0, 0.0]);
        assert!(!loaded[0].visibility[0]);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let (topo, _, dir) = setup();
        let path = dir.path().join("poses.jsonl");
        std::fs::write(
            &path,
            "{\"format\":\"poselift-poses\",\"version\":9,\"topology\":\"h36m17\",\"joints\":17,\"frame_2d\":\"raw\",\"frame_3d\":\"raw\",\"units_2d\":\"px\",\"units_3d\":\"mm\"}\n",
        )
        .unwrap();
        let err = load_poses(&path, &topo).unwrap_err();
        assert!(err.to_string().contains("version 9"), "{err}");
    }

    #[test]
    fn normalized_poses_refuse_to_save() {
        let (topo, mut samples, dir) = setup();
        samples[0].y2d = Pose2D::new(samples[0].y2d.coords().to_vec(), Frame::Normalized).unwrap();
        let err = save_poses(&dir.path().join("x.jsonl"), &samples, &topo, None).unwrap_err();
        assert!(err.to_string().contains("normalized"), "{err}");
    }
}
