use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, BoundingBox, LabelMap, RasterImage};
use crate::pose::PoseKeypoints;
use crate::vision::CannyParams;

/// Human features the object detector is expected to find.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureLabel {
    #[serde(rename = "face")]
    Face,
    #[serde(rename = "hand_left")]
    HandLeft,
    #[serde(rename = "hand_right")]
    HandRight,
}

impl FeatureLabel {
    pub const EXPECTED: [FeatureLabel; 3] = [FeatureLabel::Face, FeatureLabel::HandLeft, FeatureLabel::HandRight];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: FeatureLabel,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    crate::fsutil::read_json(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    FeatureConfidence,
    PaletteMismatch,
    EdgeMismatch,
    PoseMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactRegion {
    pub mask: BinaryMask,
    pub strategy: Strategy,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArtifactClass {
    ColorTexture,
    Deformation,
    ClothDesign,
}

impl ArtifactClass {
    pub const ALL: [ArtifactClass; 3] = [ArtifactClass::ColorTexture, ArtifactClass::Deformation, ArtifactClass::ClothDesign];

    /// Overlap tie-break rank; higher wins.
    pub fn priority(self) -> u8 {
        match self {
            ArtifactClass::Deformation => 2,
            ArtifactClass::ClothDesign => 1,
            ArtifactClass::ColorTexture => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactClass::ColorTexture => "ColorTexture",
            ArtifactClass::Deformation => "Deformation",
            ArtifactClass::ClothDesign => "ClothDesign",
        }
    }
}

/// One fused artifact. `mask` is the detected extent; `inpaint_mask` is the
/// same region padded for inpainting.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactReport {
    pub class: ArtifactClass,
    pub mask: BinaryMask,
    pub inpaint_mask: BinaryMask,
    pub strategies: BTreeSet<Strategy>,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "vton")]
    Vton,
    #[serde(rename = "pose_transfer")]
    PoseTransfer,
}

/// Everything the detector looks at for one image.
#[derive(Debug, Clone)]
pub struct DetectorInputs {
    pub task: Task,
    pub distorted: RasterImage,
    /// Cloth image (try-on) or the same person in another pose.
    pub reference: Option<RasterImage>,
    /// Pose of the subject in `reference`, used to align it.
    pub reference_pose: Option<PoseKeypoints>,
    /// Cloth region in `reference` coordinates.
    pub cloth_mask: Option<BinaryMask>,
    pub target_pose: PoseKeypoints,
    pub observed_pose: PoseKeypoints,
    pub detections: Vec<Detection>,
    pub parsing: LabelMap,
}

impl DetectorInputs {
    pub fn dims(&self) -> (usize, usize) {
        self.distorted.dims()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        if self.parsing.dims() != dims {
            return Err(Error::dims(dims, self.parsing.dims()));
        }
        if let (Some(r), Some(m)) = (&self.reference, &self.cloth_mask) {
            if r.dims() != m.dims() {
                return Err(Error::dims(r.dims(), m.dims()));
            }
        }
        Ok(())
    }
}

/// Tunables for the four strategies and fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Feature detections below this confidence are artifacts.
    pub confidence_threshold: f64,
    /// Margin (px) added around flagged feature boxes.
    pub feature_box_margin: usize,
    pub palette_k: usize,
    pub palette_seed: u64,
    /// RGB distance beyond which a palette entry is alien.
    pub palette_tau: f64,
    /// Components smaller than this fraction of the region are dropped.
    pub min_area_fraction: f64,
    /// Edge-distance threshold in pixels.
    pub edge_dist_thresh: f64,
    /// Radius (px) used to group flagged edge pixels into regions.
    pub edge_cluster_radius: usize,
    /// Erosion (px) of the aligned cloth mask before edge comparison.
    pub edge_region_erosion: usize,
    pub pose_tol_fraction: f64,
    /// Padding (px) applied to report masks for inpainting.
    pub padding: usize,
    pub canny: CannyParams,
    /// TPS regularization as a multiple of the squared mean pairwise
    /// keypoint distance.
    pub warp_lambda_factor: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.5,
            feature_box_margin: 8,
            palette_k: 8,
            palette_seed: 8,
            palette_tau: 60.0,
            min_area_fraction: 0.002,
            edge_dist_thresh: 6.0,
            edge_cluster_radius: 6,
            edge_region_erosion: 3,
            pose_tol_fraction: 0.03,
            padding: 12,
            canny: CannyParams::default(),
            warp_lambda_factor: 1e-3,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return bad("detector.confidence_threshold must be in [0, 1]");
        }
        if !(1..=64).contains(&self.palette_k) {
            return bad("detector.palette_k must be in 1..=64");
        }
        if !(self.palette_tau >= 0.0) {
            return bad("detector.palette_tau must be non-negative");
        }
        if !(0.0..1.0).contains(&self.min_area_fraction) {
            return bad("detector.min_area_fraction must be in [0, 1)");
        }
        if !(self.edge_dist_thresh >= 0.0) {
            return bad("detector.edge_dist_thresh must be non-negative");
        }
        if !(self.pose_tol_fraction > 0.0 && self.pose_tol_fraction < 1.0) {
            return bad("detector.pose_tol_fraction must be in (0, 1)");
        }
        if !(self.warp_lambda_factor >= 0.0) {
            return bad("detector.warp_lambda_factor must be non-negative");
        }
        if self.padding > 256 || self.feature_box_margin > 256 || self.edge_cluster_radius > 64 || self.edge_region_erosion > 64 {
            return bad("detector pixel radii out of range");
        }
        self.canny.validate().map_err(|e| Error::Config(format!("detector.canny: {e}")))
    }
}
