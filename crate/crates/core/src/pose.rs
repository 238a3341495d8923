//! Pose keypoints in the OpenPose BODY-18 layout, with optional 21-point
//! hand chains.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BODY_JOINTS: [&str; 18] = [
    "nose",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_eye",
    "left_eye",
    "right_ear",
    "left_ear",
];

/// Body limbs as index pairs into [`BODY_JOINTS`], in the order used by the
/// standard OpenPose renderer.
pub const BODY_LIMBS: [(usize, usize); 17] = [
    (1, 2),
    (1, 5),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (1, 8),
    (8, 9),
    (9, 10),
    (1, 11),
    (11, 12),
    (12, 13),
    (1, 0),
    (0, 14),
    (14, 16),
    (0, 15),
    (15, 17),
];

pub const HAND_POINTS: usize = 21;

/// Finger chains: wrist (0) to each fingertip.
pub const HAND_LIMBS: [(usize, usize); 20] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 4),
    (0, 5),
    (5, 6),
    (6, 7),
    (7, 8),
    (0, 9),
    (9, 10),
    (10, 11),
    (11, 12),
    (0, 13),
    (13, 14),
    (14, 15),
    (15, 16),
    (0, 17),
    (17, 18),
    (18, 19),
    (19, 20),
];

/// Joints used to align cloth between poses.
pub const ALIGNMENT_JOINTS: [&str; 9] = [
    "neck",
    "right_shoulder",
    "left_shoulder",
    "right_elbow",
    "left_elbow",
    "right_wrist",
    "left_wrist",
    "right_hip",
    "left_hip",
];

/// Minimum confidence for a joint to count as present.
pub const CONFIDENCE_GATE: f64 = 0.3;

pub fn hand_joint_name(side: &str, i: usize) -> String {
    format!("{side}_hand_{i}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub x: f64,
    pub y: f64,
    #[serde(rename = "c")]
    pub confidence: f64,
}

impl Joint {
    pub fn new(name: impl Into<String>, x: f64, y: f64, confidence: f64) -> Self {
        Self {
            name: name.into(),
            x,
            y,
            confidence,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseKeypoints {
    pub joints: Vec<Joint>,
}

impl PoseKeypoints {
    pub fn new(joints: Vec<Joint>) -> Self {
        Self { joints }
    }

    pub fn get(&self, name: &str) -> Option<&Joint> {
        self.joints.iter().find(|j| j.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Joint> {
        self.joints.iter_mut().find(|j| j.name == name)
    }

    /// Joint if present with confidence at or above the gate.
    pub fn confident(&self, name: &str) -> Option<&Joint> {
        self.get(name).filter(|j| j.confidence >= CONFIDENCE_GATE)
    }

    /// Limbs (joint-name pairs) whose both ends exist in this pose.
    pub fn skeleton(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for &(a, b) in &BODY_LIMBS {
            if self.get(BODY_JOINTS[a]).is_some() && self.get(BODY_JOINTS[b]).is_some() {
                out.push((BODY_JOINTS[a].to_string(), BODY_JOINTS[b].to_string()));
            }
        }
        for side in ["left", "right"] {
            for &(a, b) in &HAND_LIMBS {
                let (na, nb) = (hand_joint_name(side, a), hand_joint_name(side, b));
                if self.get(&na).is_some() && self.get(&nb).is_some() {
                    out.push((na, nb));
                }
            }
        }
        out
    }

    /// Names of joints connected to `name` by a limb. A hand's root point is
    /// also adjacent to the body wrist on the same side.
    pub fn neighbors(name: &str) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(i) = BODY_JOINTS.iter().position(|&j| j == name) {
            for &(a, b) in &BODY_LIMBS {
                if a == i {
                    out.push(BODY_JOINTS[b].to_string());
                } else if b == i {
                    out.push(BODY_JOINTS[a].to_string());
                }
            }
            if name == "left_wrist" || name == "right_wrist" {
                out.push(hand_joint_name(name.trim_end_matches("_wrist"), 0));
            }
            return out;
        }
        for side in ["left", "right"] {
            let prefix = format!("{side}_hand_");
            if let Some(idx) = name.strip_prefix(&prefix).and_then(|s| s.parse::<usize>().ok()) {
                for &(a, b) in &HAND_LIMBS {
                    if a == idx {
                        out.push(hand_joint_name(side, b));
                    } else if b == idx {
                        out.push(hand_joint_name(side, a));
                    }
                }
                if idx == 0 {
                    out.push(format!("{side}_wrist"));
                }
            }
        }
        out
    }

    /// Checks unique names, finite coordinates and the in-bounds rule for
    /// confident joints.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let mut seen = HashSet::new();
        for j in &self.joints {
            if !seen.insert(j.name.as_str()) {
                return Err(Error::param(format!("duplicate joint name {:?}", j.name)));
            }
            if !(0.0..=1.0).contains(&j.confidence) || !j.x.is_finite() || !j.y.is_finite() {
                return Err(Error::param(format!("joint {:?} has invalid values", j.name)));
            }
            let inside = j.x >= 0.0 && j.y >= 0.0 && j.x <= (width - 1) as f64 && j.y <= (height - 1) as f64;
            if !inside && j.confidence > 0.0 {
                return Err(Error::param(format!("joint {:?} lies outside the image", j.name)));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::fsutil::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_json(path, self)
    }

    /// Applies `f` to every joint position.
    pub fn map_points(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        Self {
            joints: self
                .joints
                .iter()
                .map(|j| {
                    let (x, y) = f(j.x, j.y);
                    Joint::new(j.name.clone(), x, y, j.confidence)
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let p = PoseKeypoints::new(vec![Joint::new("neck", 10.0, 20.5, 0.9)]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"joints":[{"name":"neck","x":10.0,"y":20.5,"c":0.9}]}"#);
        let back: PoseKeypoints = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn duplicate_names_rejected() {
        let p = PoseKeypoints::new(vec![Joint::new("neck", 1.0, 1.0, 1.0), Joint::new("neck", 2.0, 2.0, 1.0)]);
        assert!(p.validate(10, 10).is_err());
    }

    #[test]
    fn out_of_bounds_needs_zero_confidence() {
        let p = PoseKeypoints::new(vec![Joint::new("nose", -5.0, 3.0, 0.0)]);
        assert!(p.validate(10, 10).is_ok());
        let p = PoseKeypoints::new(vec![Joint::new("nose", -5.0, 3.0, 0.5)]);
        assert!(p.validate(10, 10).is_err());
    }

    #[test]
    fn neighbors_follow_limbs() {
        let n = PoseKeypoints::neighbors("left_wrist");
        assert!(n.contains(&"left_elbow".to_string()));
        assert!(n.contains(&"left_hand_0".to_string()));
        let n = PoseKeypoints::neighbors("right_hand_0");
        assert_eq!(n.len(), 6);
    }
}
