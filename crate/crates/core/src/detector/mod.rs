//! Four-strategy artifact detection: feature confidence, palette comparison,
//! Canny edge matching and pose keypoint matching, fused into classified
//! per-artifact masks.

mod strategies;
mod types;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use strategies::{
    compare_palettes, detect_low_confidence_features, flagged_joints, match_canny_edges, match_pose_keypoints,
    predicted_feature_box,
};
pub use types::{
    load_detections, ArtifactClass, ArtifactRegion, ArtifactReport, Detection, DetectorConfig, DetectorInputs,
    FeatureLabel, Strategy, Task,
};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, LabelMap};
use crate::parsing::is_clothing;
use crate::vision::{connected_components, dilate, resize_bilinear};
use crate::warp::{cloth_alignment, Alignment, Lambda};

/// Most frequent parsing label under `mask`; ties go to the smaller label.
pub fn majority_label(mask: &BinaryMask, parsing: &LabelMap) -> Option<(u8, usize)> {
    let mut counts = [0usize; 256];
    let mut any = false;
    for (i, &m) in mask.data.iter().enumerate() {
        if m {
            counts[parsing.data[i] as usize] += 1;
            any = true;
        }
    }
    if !any {
        return None;
    }
    let (label, count) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("256 entries");
    Some((label as u8, *count))
}

pub fn classify_artifact(region: &ArtifactRegion, parsing: &LabelMap) -> ArtifactClass {
    match region.strategy {
        Strategy::PaletteMismatch => ArtifactClass::ColorTexture,
        Strategy::PoseMismatch | Strategy::FeatureConfidence => ArtifactClass::Deformation,
        Strategy::EdgeMismatch => match majority_label(&region.mask, parsing) {
            Some((label, _)) if is_clothing(label) => ArtifactClass::ClothDesign,
            _ => ArtifactClass::ColorTexture,
        },
    }
}

/// Merges strategy regions into disjoint reports: one per connected
/// component of their union.
pub fn fuse(regions: &[ArtifactRegion], parsing: &LabelMap, dims: (usize, usize), padding: usize) -> Vec<ArtifactReport> {
    if regions.is_empty() {
        return Vec::new();
    }
    let mut union = BinaryMask::new(dims.0, dims.1);
    for r in regions {
        union.union_with(&r.mask);
    }
    let classes: Vec<ArtifactClass> = regions.iter().map(|r| classify_artifact(r, parsing)).collect();
    let mut out = Vec::new();
    for comp in connected_components(&union) {
        let mut strategies = BTreeSet::new();
        let mut best: Option<(f64, ArtifactClass)> = None;
        for (r, &class) in regions.iter().zip(&classes) {
            if !r.mask.intersects(&comp.mask) {
                continue;
            }
            strategies.insert(r.strategy);
            best = Some(match best {
                None => (r.score, class),
                Some((s, c)) => {
                    if r.score > s || (r.score == s && class.priority() > c.priority()) {
                        (r.score, class)
                    } else {
                        (s, c)
                    }
                }
            });
        }
        let (score, class) = best.expect("component intersects at least one region");
        out.push(ArtifactReport {
            class,
            inpaint_mask: dilate(&comp.mask, padding),
            mask: comp.mask,
            strategies,
            score,
        });
    }
    out
}

/// Result of a detector run, including strategies that could not run.
#[derive(Debug, Clone)]
pub struct DetectionOutcome {
    pub reports: Vec<ArtifactReport>,
    pub regions: Vec<ArtifactRegion>,
    pub skipped: Vec<String>,
}

/// Aligns the reference cloth to the target pose, if the inputs allow it.
pub fn align_reference(inputs: &DetectorInputs, cfg: &DetectorConfig) -> Result<Alignment> {
    let (Some(reference), Some(ref_pose), Some(cloth_mask)) = (&inputs.reference, &inputs.reference_pose, &inputs.cloth_mask)
    else {
        return Err(Error::param("alignment needs a reference image, its pose and a cloth mask"));
    };
    let (w, h) = inputs.dims();
    cloth_alignment(
        reference,
        cloth_mask,
        ref_pose,
        &inputs.target_pose,
        Lambda::Relative(cfg.warp_lambda_factor),
        w,
        h,
    )
}

pub fn detect(inputs: &DetectorInputs, cfg: &DetectorConfig) -> Result<DetectionOutcome> {
    inputs.validate()?;
    let dims = inputs.dims();
    let mut skipped = Vec::new();
    let mut regions = Vec::new();

    regions.extend(detect_low_confidence_features(
        &inputs.detections,
        &inputs.target_pose,
        cfg.confidence_threshold,
        cfg.feature_box_margin,
        dims,
    ));

    let alignment = match align_reference(inputs, cfg) {
        Ok(a) => Some(a),
        Err(e) => {
            skipped.push(format!("EdgeMismatch: {e}"));
            None
        }
    };

    // Palette: whole image against the same-person reference for pose
    // transfer; inside the aligned cloth for try-on.
    match (inputs.task, &inputs.reference, &alignment) {
        (_, None, _) => skipped.push("PaletteMismatch: no reference image".into()),
        (Task::PoseTransfer, Some(reference), _) => {
            let reference = resize_bilinear(reference, dims.0, dims.1)?;
            let region = BinaryMask::full(dims.0, dims.1);
            regions.extend(compare_palettes(
                &inputs.distorted,
                &reference,
                &region,
                cfg.palette_k,
                cfg.palette_tau,
                cfg.palette_seed,
                cfg.min_area_fraction,
            )?);
        }
        (Task::Vton, Some(_), Some(a)) => {
            let region = crate::vision::erode(&a.mask, cfg.edge_region_erosion);
            if region.is_empty() {
                skipped.push("PaletteMismatch: aligned cloth region is empty".into());
            } else {
                regions.extend(compare_palettes(
                    &inputs.distorted,
                    &a.cloth,
                    &region,
                    cfg.palette_k,
                    cfg.palette_tau,
                    cfg.palette_seed,
                    cfg.min_area_fraction,
                )?);
            }
        }
        (Task::Vton, Some(_), None) => skipped.push("PaletteMismatch: cloth could not be aligned".into()),
    }

    if let Some(a) = &alignment {
        regions.extend(match_canny_edges(
            &inputs.distorted,
            a,
            &cfg.canny,
            cfg.edge_dist_thresh,
            cfg.edge_cluster_radius,
            cfg.edge_region_erosion,
            cfg.min_area_fraction,
        )?);
    }

    regions.extend(match_pose_keypoints(
        &inputs.target_pose,
        &inputs.observed_pose,
        cfg.pose_tol_fraction,
        dims,
    ));

    for s in &skipped {
        log::info!("detector skipped {s}");
    }
    let reports = fuse(&regions, &inputs.parsing, dims, cfg.padding);
    Ok(DetectionOutcome { reports, regions, skipped })
}

/// Serializable summary of a report; the mask itself lives in a PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub class: ArtifactClass,
    pub strategies: Vec<Strategy>,
    pub score: f64,
    pub area: usize,
    pub mask_file: String,
    pub inpaint_mask_file: String,
}

impl ArtifactReport {
    pub fn summary(&self, index: usize) -> ReportSummary {
        ReportSummary {
            class: self.class,
            strategies: self.strategies.iter().copied().collect(),
            score: self.score,
            area: self.mask.count(),
            mask_file: format!("artifact_{index}.png"),
            inpaint_mask_file: format!("artifact_{index}_inpaint.png"),
        }
    }
}
