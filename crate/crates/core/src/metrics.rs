//! Keypoint evaluation: end-point error, PCK, difficulty splits and the
//! depth-based visibility rule.
//!
//! Annotation records are stored one JSON object per line:
//!
//! ```text
//! {"joints": [{"x": 12.0, "y": 30.5, "present": true, "occluded": false}, ...],
//!  "bbox_w": 96.0, "bbox_h": 140.0}
//! ```
//!
//! Predictions, when supplied, are one JSON array of `[x, y]` pairs per line,
//! aligned with the joints of the record on the same line.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::Joint2D;

/// Euclidean end-point error.
pub fn epe(pred: Joint2D, gt: Joint2D) -> f64 {
    pred.distance(&gt)
}

pub fn mean_epe(preds: &[Joint2D], gts: &[Joint2D]) -> Result<f64> {
    check_lengths(preds, gts)?;
    if preds.is_empty() {
        return Err(Error::InvalidParameter("mean EPE of an empty set".into()));
    }
    let total: f64 = preds.iter().zip(gts).map(|(p, g)| epe(*p, *g)).sum();
    Ok(total / preds.len() as f64)
}

fn check_lengths(preds: &[Joint2D], gts: &[Joint2D]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::LengthMismatch {
            expected: gts.len(),
            got: preds.len(),
        });
    }
    Ok(())
}

pub const DEFAULT_PCK_THRESHOLD: f64 = 0.5;

/// Fraction of predictions within `threshold * norm_length` of their target.
pub fn pck(preds: &[Joint2D], gts: &[Joint2D], norm_length: f64, threshold: f64) -> Result<f64> {
    check_lengths(preds, gts)?;
    if preds.is_empty() {
        return Err(Error::InvalidParameter("PCK of an empty set".into()));
    }
    if !(norm_length > 0.0) || !(threshold >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "PCK needs positive norm length and nonnegative threshold, got {norm_length}, {threshold}"
        )));
    }
    let radius = threshold * norm_length;
    let hits = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| epe(**p, **g) <= radius)
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAnnotation {
    pub x: f64,
    pub y: f64,
    pub present: bool,
    #[serde(default)]
    pub occluded: bool,
}

impl JointAnnotation {
    pub fn position(&self) -> Joint2D {
        Joint2D::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub joints: Vec<JointAnnotation>,
    pub bbox_w: f64,
    pub bbox_h: f64,
}

impl AnnotationRecord {
    pub fn present_count(&self) -> usize {
        self.joints.iter().filter(|j| j.present).count()
    }

    /// Occluded share of the present joints; zero when none are present.
    pub fn occlusion_ratio(&self) -> f64 {
        let present = self.present_count();
        if present == 0 {
            return 0.0;
        }
        let occluded = self.joints.iter().filter(|j| j.present && j.occluded).count();
        occluded as f64 / present as f64
    }

    pub fn input_size(&self) -> f64 {
        self.bbox_w.max(self.bbox_h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Unclassified,
}

impl Difficulty {
    pub const BINS: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn name(&self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
            Difficulty::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Present-joint count: 11-17 easy, 6-10 medium, 1-5 hard.
pub fn joints_difficulty(present: usize) -> Difficulty {
    match present {
        11..=17 => Difficulty::Easy,
        6..=10 => Difficulty::Medium,
        1..=5 => Difficulty::Hard,
        _ => Difficulty::Unclassified,
    }
}

/// Occlusion share: `[0, 0.1)` easy, `[0.1, 0.5)` medium, `[0.5, 1]` hard.
pub fn occlusion_difficulty(ratio: f64) -> Difficulty {
    if !(0.0..=1.0).contains(&ratio) {
        Difficulty::Unclassified
    } else if ratio < 0.1 {
        Difficulty::Easy
    } else if ratio < 0.5 {
        Difficulty::Medium
    } else {
        Difficulty::Hard
    }
}

/// Larger bounding-box side in pixels: `(128, inf)` easy, `(64, 128]`
/// medium, `[32, 64]` hard; smaller boxes are unclassified.
pub fn size_difficulty(size: f64) -> Difficulty {
    if size > 128.0 {
        Difficulty::Easy
    } else if size > 64.0 {
        Difficulty::Medium
    } else if size >= 32.0 {
        Difficulty::Hard
    } else {
        Difficulty::Unclassified
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DifficultyLabels {
    pub joints: Difficulty,
    pub occlusion: Difficulty,
    pub size: Difficulty,
    /// The shared label when all three factors agree.
    pub combined: Difficulty,
}

pub fn difficulty(ar: &AnnotationRecord) -> DifficultyLabels {
    let joints = joints_difficulty(ar.present_count());
    let occlusion = if ar.present_count() == 0 {
        Difficulty::Unclassified
    } else {
        occlusion_difficulty(ar.occlusion_ratio())
    };
    let size = size_difficulty(ar.input_size());
    let combined = if joints == occlusion && occlusion == size {
        joints
    } else {
        Difficulty::Unclassified
    };
    DifficultyLabels {
        joints,
        occlusion,
        size,
        combined,
    }
}

pub const DEFAULT_DEPTH_DELTA_MM: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthSample {
    /// Depth map value at the joint's pixel, mm.
    pub depth_at_uv: f64,
    /// Joint depth, mm.
    pub joint_depth: f64,
    pub delta: f64,
}

impl DepthSample {
    pub fn new(depth_at_uv: f64, joint_depth: f64) -> Self {
        Self {
            depth_at_uv,
            joint_depth,
            delta: DEFAULT_DEPTH_DELTA_MM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Visible,
    Occluded,
}

/// Visible when the depth map agrees with the joint depth to within `delta`.
pub fn visibility(ds: &DepthSample) -> Visibility {
    if (ds.depth_at_uv - ds.joint_depth).abs() < ds.delta {
        Visibility::Visible
    } else {
        Visibility::Occluded
    }
}

pub fn parse_records(text: &str) -> Result<Vec<AnnotationRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Format(format!("record line {}: {e}", n + 1)))
        })
        .collect()
}

pub fn parse_predictions(text: &str) -> Result<Vec<Vec<Joint2D>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let pairs: Vec<[f64; 2]> = serde_json::from_str(l)
                .map_err(|e| Error::Format(format!("prediction line {}: {e}", n + 1)))?;
            Ok(pairs.into_iter().map(|[x, y]| Joint2D::new(x, y)).collect())
        })
        .collect()
}
