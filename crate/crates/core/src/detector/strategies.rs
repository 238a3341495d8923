use std::collections::{BTreeMap, BTreeSet};

use super::types::{ArtifactRegion, Detection, FeatureLabel, Strategy};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, BoundingBox, RasterImage};
use crate::pose::{PoseKeypoints, CONFIDENCE_GATE};
use crate::vision::{canny, connected_components, dilate, disc_mask, edge_distance, quantize_palette, to_grayscale, CannyParams};
use crate::warp::Alignment;

fn diagonal(dims: (usize, usize)) -> f64 {
    ((dims.0 as f64).powi(2) + (dims.1 as f64).powi(2)).sqrt()
}

fn clip_box(x0: f64, y0: f64, x1: f64, y1: f64, dims: (usize, usize)) -> BoundingBox {
    let cx = |v: f64| v.round().clamp(0.0, (dims.0 - 1) as f64) as usize;
    let cy = |v: f64| v.round().clamp(0.0, (dims.1 - 1) as f64) as usize;
    BoundingBox::new(cx(x0), cy(y0), cx(x1), cy(y1))
}

/// Box where a feature should appear according to the pose, if the pose
/// shows it at all.
pub fn predicted_feature_box(label: FeatureLabel, pose: &PoseKeypoints, dims: (usize, usize)) -> Option<BoundingBox> {
    let diag = diagonal(dims);
    let names: Vec<String> = match label {
        FeatureLabel::Face => ["nose", "right_eye", "left_eye", "right_ear", "left_ear"].iter().map(|s| s.to_string()).collect(),
        FeatureLabel::HandLeft | FeatureLabel::HandRight => {
            let side = if label == FeatureLabel::HandLeft { "left" } else { "right" };
            std::iter::once(format!("{side}_wrist"))
                .chain((0..crate::pose::HAND_POINTS).map(|i| crate::pose::hand_joint_name(side, i)))
                .collect()
        }
    };
    let pts: Vec<(f64, f64)> = names.iter().filter_map(|n| pose.confident(n)).map(|j| (j.x, j.y)).collect();
    if pts.is_empty() {
        return None;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for (x, y) in &pts {
        x0 = x0.min(*x);
        y0 = y0.min(*y);
        x1 = x1.max(*x);
        y1 = y1.max(*y);
    }
    let half = 0.04 * diag;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let hw = ((x1 - x0) / 2.0 + 0.02 * diag).max(half);
    let hh = ((y1 - y0) / 2.0 + 0.02 * diag).max(half);
    Some(clip_box(cx - hw, cy - hh, cx + hw, cy + hh, dims))
}

/// Flags low-confidence feature detections, and expected features that were
/// not detected at all (treated as confidence 0) where the pose predicts them.
pub fn detect_low_confidence_features(
    detections: &[Detection],
    pose: &PoseKeypoints,
    threshold: f64,
    margin: usize,
    dims: (usize, usize),
) -> Vec<ArtifactRegion> {
    let (w, h) = dims;
    let mut out = Vec::new();
    let clip = |b: &BoundingBox| clip_box(b.x0 as f64, b.y0 as f64, b.x1 as f64, b.y1 as f64, dims);
    for d in detections {
        if d.confidence < threshold {
            out.push(ArtifactRegion {
                mask: dilate(&clip(&d.bbox).to_mask(w, h), margin),
                strategy: Strategy::FeatureConfidence,
                score: 1.0 - d.confidence.clamp(0.0, 1.0),
            });
        }
    }
    for label in FeatureLabel::EXPECTED {
        if detections.iter().any(|d| d.label == label) {
            continue;
        }
        // Absent counts as confidence 0, which is below any threshold > 0.
        if threshold <= 0.0 {
            continue;
        }
        if let Some(bb) = predicted_feature_box(label, pose, dims) {
            out.push(ArtifactRegion {
                mask: dilate(&bb.to_mask(w, h), margin),
                strategy: Strategy::FeatureConfidence,
                score: 1.0,
            });
        }
    }
    out
}

/// Quantizes both images inside `region` and flags pixels whose palette entry
/// is farther than `tau` from every reference entry.
pub fn compare_palettes(
    image: &RasterImage,
    reference: &RasterImage,
    region: &BinaryMask,
    k: usize,
    tau: f64,
    seed: u64,
    min_area_fraction: f64,
) -> Result<Vec<ArtifactRegion>> {
    if image.dims() != reference.dims() {
        return Err(Error::dims(image.dims(), reference.dims()));
    }
    let region_area = region.count();
    if region_area == 0 {
        return Err(Error::EmptyRegion("palette comparison region is empty".into()));
    }
    let qi = quantize_palette(image, k, seed, Some(region))?;
    let qr = quantize_palette(reference, k, seed, Some(region))?;
    let min_area = min_area_fraction * region_area as f64;
    let (w, h) = image.dims();
    let mut out = Vec::new();
    for (idx, entry) in qi.palette.entries.iter().enumerate() {
        let (_, dist) = qr.palette.nearest(*entry);
        if dist <= tau {
            continue;
        }
        let mask = BinaryMask {
            width: w,
            height: h,
            data: qi.labels.iter().map(|l| *l == Some(idx as u8)).collect(),
        };
        for c in connected_components(&mask) {
            if (c.area as f64) >= min_area {
                out.push(ArtifactRegion {
                    mask: c.mask,
                    strategy: Strategy::PaletteMismatch,
                    score: dist,
                });
            }
        }
    }
    Ok(out)
}

/// Compares Canny edges of the aligned cloth and the distorted image inside
/// the (eroded) aligned cloth mask.
pub fn match_canny_edges(
    distorted: &RasterImage,
    aligned: &Alignment,
    params: &CannyParams,
    dist_thresh: f64,
    cluster_radius: usize,
    region_erosion: usize,
    min_area_fraction: f64,
) -> Result<Vec<ArtifactRegion>> {
    if aligned.cloth.dims() != distorted.dims() {
        return Err(Error::dims(distorted.dims(), aligned.cloth.dims()));
    }
    let cloth_area = aligned.mask.count();
    if cloth_area == 0 {
        return Ok(Vec::new());
    }
    let region = crate::vision::erode(&aligned.mask, region_erosion);
    if region.is_empty() {
        return Ok(Vec::new());
    }
    let cloth_edges = canny(&to_grayscale(&aligned.cloth), params)?;
    let image_edges = canny(&to_grayscale(distorted), params)?;
    let ed = edge_distance(&cloth_edges, &image_edges, &region)?;
    let (w, h) = distorted.dims();
    let flagged = BinaryMask {
        width: w,
        height: h,
        data: ed.field.iter().map(|&d| d > dist_thresh).collect(),
    };
    if flagged.is_empty() {
        return Ok(Vec::new());
    }
    let grouped = dilate(&flagged, cluster_radius).intersect(&region);
    let min_area = min_area_fraction * cloth_area as f64;
    let mut out = Vec::new();
    for c in connected_components(&grouped) {
        if (c.area as f64) < min_area {
            continue;
        }
        let (mut sum, mut n) = (0.0, 0usize);
        for i in 0..c.mask.data.len() {
            if c.mask.data[i] && flagged.data[i] {
                sum += ed.field[i] - dist_thresh;
                n += 1;
            }
        }
        if n == 0 {
            continue;
        }
        out.push(ArtifactRegion {
            mask: c.mask,
            strategy: Strategy::EdgeMismatch,
            score: sum / n as f64,
        });
    }
    Ok(out)
}

/// Names of target-confident joints that are displaced by more than the
/// tolerance (or missing) in the observed pose, with their scores.
pub fn flagged_joints(target: &PoseKeypoints, observed: &PoseKeypoints, tol: f64) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for j in &target.joints {
        if j.confidence < CONFIDENCE_GATE {
            continue;
        }
        match observed.confident(&j.name) {
            Some(o) => {
                let dev = (o.x - j.x).hypot(o.y - j.y);
                if dev > tol {
                    out.insert(j.name.clone(), dev / tol);
                }
            }
            // A vanished joint scores as if displaced to the disc edge.
            None => {
                out.insert(j.name.clone(), 2.0);
            }
        }
    }
    out
}

/// Discs of radius `2 * tol` at the target location of each misplaced joint;
/// discs of joints adjacent in the skeleton are merged.
pub fn match_pose_keypoints(
    target: &PoseKeypoints,
    observed: &PoseKeypoints,
    tol_fraction: f64,
    dims: (usize, usize),
) -> Vec<ArtifactRegion> {
    let tol = tol_fraction * diagonal(dims);
    let flagged = flagged_joints(target, observed, tol);
    let mut visited = BTreeSet::new();
    let mut out = Vec::new();
    for start in flagged.keys() {
        if visited.contains(start) {
            continue;
        }
        let mut group = vec![start.clone()];
        visited.insert(start.clone());
        let mut i = 0;
        while i < group.len() {
            for n in PoseKeypoints::neighbors(&group[i]) {
                if flagged.contains_key(&n) && visited.insert(n.clone()) {
                    group.push(n);
                }
            }
            i += 1;
        }
        let mut mask = BinaryMask::new(dims.0, dims.1);
        let mut score: f64 = 0.0;
        for name in &group {
            let j = target.get(name).expect("flagged joint exists in target");
            mask.union_with(&disc_mask(dims.0, dims.1, j.x, j.y, 2.0 * tol));
            score = score.max(flagged[name]);
        }
        if !mask.is_empty() {
            out.push(ArtifactRegion {
                mask,
                strategy: Strategy::PoseMismatch,
                score,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Joint;

    const DIMS: (usize, usize) = (200, 300);

    fn pose_with_wrists() -> PoseKeypoints {
        PoseKeypoints::new(vec![
            Joint::new("nose", 100.0, 40.0, 0.9),
            Joint::new("neck", 100.0, 70.0, 0.9),
            Joint::new("left_elbow", 140.0, 120.0, 0.9),
            Joint::new("left_wrist", 150.0, 170.0, 0.9),
            Joint::new("right_elbow", 60.0, 120.0, 0.9),
            Joint::new("right_wrist", 50.0, 170.0, 0.9),
        ])
    }

    fn det(label: FeatureLabel, bbox: BoundingBox, confidence: f64) -> Detection {
        Detection { label, bbox, confidence }
    }

    #[test]
    fn missing_hands_flagged_from_pose() {
        let d = vec![det(FeatureLabel::Face, BoundingBox::new(85, 25, 115, 55), 0.92)];
        let r = detect_low_confidence_features(&d, &pose_with_wrists(), 0.5, 8, DIMS);
        // Expected set {face, left, right} minus confident {face}.
        assert_eq!(r.len(), 2);
        let lw = r.iter().filter(|r| r.mask.get(150, 170)).count();
        let rw = r.iter().filter(|r| r.mask.get(50, 170)).count();
        assert_eq!((lw, rw), (1, 1));
        assert!(r.iter().all(|r| !r.mask.get(100, 40)));
    }

    #[test]
    fn all_confident_no_regions() {
        let d = vec![
            det(FeatureLabel::Face, BoundingBox::new(85, 25, 115, 55), 0.95),
            det(FeatureLabel::HandLeft, BoundingBox::new(140, 160, 160, 180), 0.9),
            det(FeatureLabel::HandRight, BoundingBox::new(40, 160, 60, 180), 0.91),
        ];
        assert!(detect_low_confidence_features(&d, &pose_with_wrists(), 0.5, 8, DIMS).is_empty());
    }

    #[test]
    fn single_low_confidence_box_dilated() {
        let bb = BoundingBox::new(140, 160, 160, 180);
        let d = vec![
            det(FeatureLabel::Face, BoundingBox::new(85, 25, 115, 55), 0.95),
            det(FeatureLabel::HandLeft, bb, 0.30),
            det(FeatureLabel::HandRight, BoundingBox::new(40, 160, 60, 180), 0.91),
        ];
        let r = detect_low_confidence_features(&d, &pose_with_wrists(), 0.5, 8, DIMS);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].mask, dilate(&bb.to_mask(DIMS.0, DIMS.1), 8));
        assert!((r[0].score - 0.7).abs() < 1e-12);
    }

    fn gray_shirt() -> RasterImage {
        RasterImage::filled(160, 160, [128, 128, 128])
    }

    #[test]
    fn palette_identical_images_clean() {
        let img = gray_shirt();
        let r = compare_palettes(&img, &img, &BinaryMask::full(160, 160), 8, 60.0, 8, 0.002).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn palette_green_patch_found() {
        let reference = gray_shirt();
        let mut img = reference.clone();
        let patch = BoundingBox::new(50, 40, 109, 99);
        for y in patch.y0..=patch.y1 {
            for x in patch.x0..=patch.x1 {
                img.set(x, y, [0, 255, 0]);
            }
        }
        let r = compare_palettes(&img, &reference, &BinaryMask::full(160, 160), 8, 60.0, 8, 0.002).unwrap();
        assert_eq!(r.len(), 1);
        let truth = patch.to_mask(160, 160);
        let iou = crate::metrics::mask_iou(&r[0].mask, &truth).unwrap();
        assert!(iou >= 0.5);
        let none = compare_palettes(&img, &reference, &BinaryMask::full(160, 160), 8, 442.0, 8, 0.002).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn palette_empty_region_errors() {
        let img = gray_shirt();
        assert!(compare_palettes(&img, &img, &BinaryMask::new(160, 160), 8, 60.0, 8, 0.002).is_err());
    }

    #[test]
    fn pose_identical_clean() {
        let p = pose_with_wrists();
        assert!(match_pose_keypoints(&p, &p, 0.03, DIMS).is_empty());
    }

    #[test]
    fn pose_displaced_wrist_score() {
        let target = pose_with_wrists();
        let diag = diagonal(DIMS);
        let mut observed = target.clone();
        observed.get_mut("left_wrist").unwrap().x += 0.10 * diag;
        let r = match_pose_keypoints(&target, &observed, 0.03, DIMS);
        assert_eq!(r.len(), 1);
        assert!(r[0].mask.get(150, 170));
        // 0.10 / 0.03 = 3.33...
        assert!((r[0].score - 10.0 / 3.0).abs() < 0.1);
    }

    #[test]
    fn pose_low_confidence_target_ignored() {
        let mut target = pose_with_wrists();
        target.get_mut("left_wrist").unwrap().confidence = 0.1;
        let mut observed = target.clone();
        observed.get_mut("left_wrist").unwrap().x = 10.0;
        assert!(match_pose_keypoints(&target, &observed, 0.03, DIMS).is_empty());
    }

    #[test]
    fn adjacent_joint_discs_merge() {
        let target = pose_with_wrists();
        let mut observed = target.clone();
        observed.get_mut("left_wrist").unwrap().y += 60.0;
        observed.get_mut("left_elbow").unwrap().y += 60.0;
        observed.get_mut("right_wrist").unwrap().y += 60.0;
        let r = match_pose_keypoints(&target, &observed, 0.03, DIMS);
        assert_eq!(r.len(), 2);
    }

    fn flagged_area(regions: &[ArtifactRegion]) -> usize {
        regions.iter().map(|r| r.mask.count()).sum()
    }

    fn non_increasing(counts: &[usize]) -> bool {
        counts.windows(2).all(|w| w[1] <= w[0])
    }

    #[test]
    fn palette_tau_monotone() {
        let reference = gray_shirt();
        let mut img = reference.clone();
        for (i, color) in [[0, 255, 0], [200, 60, 60], [150, 150, 170], [20, 20, 20]].iter().enumerate() {
            let x0 = 10 + 35 * i;
            for y in 30..70 {
                for x in x0..x0 + 30 {
                    img.set(x, y, *color);
                }
            }
        }
        let full = BinaryMask::full(160, 160);
        let counts: Vec<usize> = [0.0, 10.0, 30.0, 60.0, 120.0, 250.0, 450.0]
            .iter()
            .map(|&tau| flagged_area(&compare_palettes(&img, &reference, &full, 8, tau, 8, 0.002).unwrap()))
            .collect();
        assert!(non_increasing(&counts), "{counts:?}");
        assert!(counts[0] > 0 && *counts.last().unwrap() == 0, "{counts:?}");
    }

    #[test]
    fn edge_dist_thresh_monotone() {
        let (w, h) = (120, 120);
        let mut cloth = RasterImage::filled(w, h, [200, 200, 200]);
        for y in 0..h {
            for x in 0..w {
                if (x / 6) % 2 == 0 {
                    cloth.set(x, y, [40, 40, 120]);
                }
            }
        }
        let mut distorted = cloth.clone();
        for y in 40..80 {
            for x in 30..90 {
                distorted.set(x, y, [200, 200, 200]);
            }
        }
        let pts = [(0.0, 0.0), (119.0, 0.0), (0.0, 119.0), (119.0, 119.0)];
        let aligned = Alignment {
            cloth,
            mask: BinaryMask::full(w, h),
            inverse: crate::warp::solve_tps(&pts, &pts, 0.0).unwrap(),
        };
        let params = CannyParams::default();
        let counts: Vec<usize> = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0]
            .iter()
            .map(|&t| flagged_area(&match_canny_edges(&distorted, &aligned, &params, t, 2, 2, 0.001).unwrap()))
            .collect();
        assert!(non_increasing(&counts), "{counts:?}");
        assert!(counts[0] > 0 && *counts.last().unwrap() == 0, "{counts:?}");
    }

    #[test]
    fn confidence_threshold_flags_more_as_it_rises() {
        let d = vec![
            det(FeatureLabel::Face, BoundingBox::new(85, 25, 115, 55), 0.35),
            det(FeatureLabel::HandLeft, BoundingBox::new(140, 160, 160, 180), 0.6),
            det(FeatureLabel::HandRight, BoundingBox::new(40, 160, 60, 180), 0.85),
        ];
        let counts: Vec<usize> = [0.95, 0.8, 0.5, 0.3, 0.1]
            .iter()
            .map(|&t| flagged_area(&detect_low_confidence_features(&d, &pose_with_wrists(), t, 8, DIMS)))
            .collect();
        assert!(non_increasing(&counts), "{counts:?}");
        assert_eq!(*counts.last().unwrap(), 0);
    }

    #[test]
    fn pose_tolerance_shrinks_flagged_joint_set() {
        let target = pose_with_wrists();
        let mut observed = target.clone();
        for (name, dx) in [("left_wrist", 8.0), ("right_wrist", 20.0), ("left_elbow", 45.0), ("nose", 90.0)] {
            observed.get_mut(name).unwrap().x += dx;
        }
        let diag = diagonal(DIMS);
        let sets: Vec<BTreeSet<String>> = [0.01, 0.03, 0.06, 0.12, 0.3, 0.5]
            .iter()
            .map(|&f| flagged_joints(&target, &observed, f * diag).into_keys().collect())
            .collect();
        for pair in sets.windows(2) {
            assert!(pair[1].is_subset(&pair[0]), "{sets:?}");
        }
        assert_eq!(sets[0].len(), 4);
        assert!(sets.last().unwrap().is_empty());
    }
}
