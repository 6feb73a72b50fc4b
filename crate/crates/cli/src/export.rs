//! BVH and JSON export of motion sequences.
//!
//! BVH uses Z-Y-X Euler channels (`R = Rz * Ry * Rx`, degrees). The root has
//! six channels; its rotation is always identity because the feature layout
//! gives the root no rotation. Every other joint carries its parent-local
//! rotation, which orients its children's offsets exactly as in the forward
//! kinematics of the motion representation.

use std::fmt::Write as _;
use std::path::Path;

use clap::ValueEnum;
use ereact_core::motion::{decode_positions, euler_zyx_from_matrix, rot6d_to_matrix, MotionSequence, SkeletonSpec};
use nalgebra::{Matrix3, Rotation3, Vector3};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Bvh,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Bvh => "bvh",
            ExportFormat::Json => "json",
        }
    }
}

pub fn export(motion: &MotionSequence, format: ExportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ExportFormat::Bvh => bvh_string(motion)?,
        ExportFormat::Json => json_string(motion),
    };
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Parent-local rotation matrices of the non-root joints at `frame`.
pub fn local_rotations(motion: &MotionSequence, frame: usize) -> Result<Vec<Matrix3<f64>>> {
    let row = motion.frame(frame);
    let r0 = motion.layout().rotations().start;
    (0..motion.skeleton().joint_count() - 1)
        .map(|k| {
            let mut d = [0.0; 6];
            for (m, v) in d.iter_mut().enumerate() {
                *v = row[r0 + 6 * k + m];
            }
            Ok(rot6d_to_matrix(&d)?)
        })
        .collect()
}

/// Joints in depth-first order, children visited by ascending index.
fn dfs_order(skeleton: &SkeletonSpec) -> Vec<usize> {
    let mut order = Vec::with_capacity(skeleton.joint_count());
    let mut stack = vec![0];
    while let Some(j) = stack.pop() {
        order.push(j);
        let mut children: Vec<usize> = skeleton.children(j).collect();
        children.sort_unstable_by(|a, b| b.cmp(a));
        stack.extend(children);
    }
    order
}

fn write_joint(out: &mut String, skeleton: &SkeletonSpec, j: usize, depth: usize) {
    let pad = "  ".repeat(depth);
    let o = skeleton.rest_offsets()[j];
    if j == 0 {
        let _ = writeln!(out, "ROOT {}", skeleton.names()[j]);
    } else {
        let _ = writeln!(out, "{pad}JOINT {}", skeleton.names()[j]);
    }
    let _ = writeln!(out, "{pad}{{");
    let _ = writeln!(out, "{pad}  OFFSET {} {} {}", o.x, o.y, o.z);
    if j == 0 {
        let _ = writeln!(out, "{pad}  CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation");
    } else {
        let _ = writeln!(out, "{pad}  CHANNELS 3 Zrotation Yrotation Xrotation");
    }
    let mut children: Vec<usize> = skeleton.children(j).collect();
    children.sort_unstable();
    if children.is_empty() {
        let _ = writeln!(out, "{pad}  End Site");
        let _ = writeln!(out, "{pad}  {{");
        let _ = writeln!(out, "{pad}    OFFSET 0 0 0");
        let _ = writeln!(out, "{pad}  }}");
    }
    for c in children {
        write_joint(out, skeleton, c, depth + 1);
    }
    let _ = writeln!(out, "{pad}}}");
}

pub fn bvh_string(motion: &MotionSequence) -> Result<String> {
    let skeleton = motion.skeleton();
    let mut out = String::from("HIERARCHY\n");
    write_joint(&mut out, skeleton, 0, 0);
    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {}", motion.len());
    let _ = writeln!(out, "Frame Time: {}", 1.0 / motion.fps());
    let order = dfs_order(skeleton);
    let root_offset = skeleton.rest_offsets()[0];
    for i in 0..motion.len() {
        let rots = local_rotations(motion, i)?;
        let row = motion.frame(i);
        let mut values: Vec<f64> = Vec::with_capacity(3 + 3 * skeleton.joint_count());
        values.extend([row[0] - root_offset.x, row[1] - root_offset.y, row[2] - root_offset.z]);
        for &j in &order {
            if j == 0 {
                values.extend([0.0, 0.0, 0.0]);
            } else {
                values.extend(euler_zyx_from_matrix(&rots[j - 1]));
            }
        }
        let line: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvhJoint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: [f64; 3],
    pub channels: Vec<String>,
}

/// Parsed BVH file. Joints are in file order; end sites are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct BvhDocument {
    pub joints: Vec<BvhJoint>,
    pub frame_time: f64,
    pub frames: Vec<Vec<f64>>,
}

fn bad(origin: &Path, msg: impl Into<String>) -> CliError {
    CliError::format(origin, msg)
}

pub fn parse_bvh(text: &str, origin: &Path) -> Result<BvhDocument> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some("HIERARCHY") {
        return Err(bad(origin, "missing HIERARCHY"));
    }
    let mut joints: Vec<BvhJoint> = Vec::new();
    // Open scopes: Some(joint index) or None for an end site.
    let mut stack: Vec<Option<usize>> = Vec::new();
    let mut pending: Option<Option<BvhJoint>> = None;
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(origin, format!("bad number '{s}'")));
    loop {
        let line = lines.next().ok_or_else(|| bad(origin, "missing MOTION"))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "ROOT" | "JOINT" => {
                if tokens.len() < 2 || (tokens[0] == "ROOT") != joints.is_empty() {
                    return Err(bad(origin, format!("unexpected '{line}'")));
                }
                let parent = stack.iter().rev().find_map(|s| *s);
                pending = Some(Some(BvhJoint { name: tokens[1].to_string(), parent, offset: [0.0; 3], channels: Vec::new() }));
            }
            "End" => pending = Some(None),
            "{" => match pending.take() {
                Some(Some(j)) => {
                    joints.push(j);
                    stack.push(Some(joints.len() - 1));
                }
                Some(None) => stack.push(None),
                None => return Err(bad(origin, "unexpected '{'")),
            },
            "}" => {
                stack.pop().ok_or_else(|| bad(origin, "unbalanced '}'"))?;
            }
            "OFFSET" => {
                if tokens.len() != 4 {
                    return Err(bad(origin, "OFFSET needs 3 values"));
                }
                if let Some(Some(j)) = stack.last() {
                    joints[*j].offset = [num(tokens[1])?, num(tokens[2])?, num(tokens[3])?];
                }
            }
            "CHANNELS" => {
                let j = match stack.last() {
                    Some(Some(j)) => *j,
                    _ => return Err(bad(origin, "CHANNELS outside a joint")),
                };
                let n: usize = tokens.get(1).and_then(|t| t.parse().ok()).ok_or_else(|| bad(origin, "bad CHANNELS count"))?;
                if tokens.len() != n + 2 {
                    return Err(bad(origin, "CHANNELS count mismatch"));
                }
                joints[j].channels = tokens[2..].iter().map(|s| s.to_string()).collect();
            }
            "MOTION" => break,
            _ => return Err(bad(origin, format!("unexpected '{line}'"))),
        }
    }
    if !stack.is_empty() || joints.is_empty() {
        return Err(bad(origin, "unbalanced hierarchy"));
    }
    let frames_line = lines.next().ok_or_else(|| bad(origin, "missing Frames"))?;
    let count: usize = frames_line
        .strip_prefix("Frames:")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad(origin, "bad Frames line"))?;
    let time_line = lines.next().ok_or_else(|| bad(origin, "missing Frame Time"))?;
    let frame_time = time_line
        .strip_prefix("Frame Time:")
        .ok_or_else(|| bad(origin, "bad Frame Time line"))
        .and_then(|v| num(v.trim()))?;
    let width: usize = joints.iter().map(|j| j.channels.len()).sum();
    let frames = lines
        .map(|l| {
            let v = l.split_whitespace().map(num).collect::<Result<Vec<f64>>>()?;
            if v.len() != width {
                return Err(bad(origin, format!("frame has {} values, expected {width}", v.len())));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    if frames.len() != count {
        return Err(bad(origin, format!("Frames: {count} but {} frame lines", frames.len())));
    }
    Ok(BvhDocument { joints, frame_time, frames })
}

fn axis_rotation(channel: &str, degrees: f64) -> Option<Matrix3<f64>> {
    let axis = match channel {
        "Xrotation" => Vector3::x_axis(),
        "Yrotation" => Vector3::y_axis(),
        "Zrotation" => Vector3::z_axis(),
        _ => return None,
    };
    Some(Rotation3::from_axis_angle(&axis, degrees.to_radians()).into_inner())
}

impl BvhDocument {
    /// Global joint positions `(frames, joints, 3)` by standard BVH forward
    /// kinematics, rotations composed in channel order.
    pub fn positions(&self) -> Array3<f64> {
        let n = self.joints.len();
        let mut out = Array3::zeros((self.frames.len(), n, 3));
        for (f, values) in self.frames.iter().enumerate() {
            let mut cursor = 0;
            let mut global_rot: Vec<Matrix3<f64>> = Vec::with_capacity(n);
            let mut global_pos: Vec<Vector3<f64>> = Vec::with_capacity(n);
            for joint in &self.joints {
                let mut translation = Vector3::from(joint.offset);
                let mut local = Matrix3::identity();
                for ch in &joint.channels {
                    let v = values[cursor];
                    cursor += 1;
                    match ch.as_str() {
                        "Xposition" => translation.x += v,
                        "Yposition" => translation.y += v,
                        "Zposition" => translation.z += v,
                        other => local *= axis_rotation(other, v).unwrap_or_else(Matrix3::identity),
                    }
                }
                let (pos, rot) = match joint.parent {
                    None => (translation, local),
                    Some(p) => (global_pos[p] + global_rot[p] * translation, global_rot[p] * local),
                };
                global_pos.push(pos);
                global_rot.push(rot);
            }
            for (j, p) in global_pos.iter().enumerate() {
                for c in 0..3 {
                    out[[f, j, c]] = p[c];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionsExport {
    pub fps: f64,
    pub joints: Vec<String>,
    pub parents: Vec<Option<usize>>,
    /// `frames[i][j]` is joint `j`'s position at frame `i`.
    pub frames: Vec<Vec<[f64; 3]>>,
}

impl PositionsExport {
    pub fn from_motion(motion: &MotionSequence) -> Self {
        let pos = decode_positions(motion);
        let (l, n, _) = pos.dim();
        Self {
            fps: motion.fps(),
            joints: motion.skeleton().names().to_vec(),
            parents: motion.skeleton().parents().to_vec(),
            frames: (0..l)
                .map(|i| (0..n).map(|j| [pos[[i, j, 0]], pos[[i, j, 1]], pos[[i, j, 2]]]).collect())
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
    }

    pub fn to_array(&self) -> Array3<f64> {
        let l = self.frames.len();
        let n = self.joints.len();
        Array3::from_shape_fn((l, n, 3), |(i, j, c)| self.frames[i][j][c])
    }
}

fn json_string(motion: &MotionSequence) -> String {
    serde_json::to_string(&PositionsExport::from_motion(motion)).expect("positions serialise") + "\n"
}
