//! Condition images, prompts and per-condition scales for conditioned
//! inpainting, bundled into a [`ConditionBundle`].

mod prompt;
mod render;
mod scales;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use prompt::{
    choose_reference, generate_prompt, identify_mask_region, BodyRegion, Captioner, FailingCaptioner, FixedCaptioner,
    PaletteCaptioner, PromptConfig, Prompts, RegionPhrases,
};
pub use render::{
    decode_seg_condition, hand_limb_color, make_seg_condition, render_pose_condition, BODY_COLORS, HAND_JOINT_COLOR,
    JOINT_RADIUS, LIMB_WIDTH,
};
pub use scales::{generate_scales, ScaleModel, ScaleRules, ScaleVector};
pub(crate) use render::segment_distance;

use crate::detector::{ArtifactReport, DetectorConfig, DetectorInputs, Task};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, EdgeMap, RasterImage};
use crate::pose::PoseKeypoints;
use crate::vision::{canny, dilate, resize_bilinear, resize_nearest_mask, to_grayscale, CannyParams};
use crate::warp::{cloth_alignment, Lambda};

/// Edges farther than this from the cloth mask are dropped from the
/// condition image.
pub const CANNY_MASK_MARGIN: usize = 2;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditioningConfig {
    pub scales: ScaleRules,
    pub prompt: PromptConfig,
}

impl ConditioningConfig {
    pub fn validate(&self) -> Result<()> {
        self.scales.validate()?;
        self.prompt.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CannyCondition {
    pub image: RasterImage,
    /// True when alignment failed and the unwarped cloth was used.
    pub fallback: bool,
}

fn masked_edges(img: &RasterImage, mask: &BinaryMask, params: &CannyParams) -> Result<RasterImage> {
    let edges = canny(&to_grayscale(img), params)?;
    let keep = dilate(mask, CANNY_MASK_MARGIN);
    Ok(EdgeMap(edges.intersect(&keep)).render())
}

/// Warps the cloth to the target pose and renders its Canny edges, white on
/// black, at `out_w x out_h`.
#[allow(clippy::too_many_arguments)]
pub fn make_canny_condition(
    cloth: &RasterImage,
    cloth_mask: &BinaryMask,
    src_pose: &PoseKeypoints,
    dst_pose: &PoseKeypoints,
    params: &CannyParams,
    lambda: Lambda,
    out_w: usize,
    out_h: usize,
) -> Result<CannyCondition> {
    match cloth_alignment(cloth, cloth_mask, src_pose, dst_pose, lambda, out_w, out_h) {
        Ok(a) => Ok(CannyCondition {
            image: masked_edges(&a.cloth, &a.mask, params)?,
            fallback: false,
        }),
        Err(e @ (Error::InsufficientCorrespondence { .. } | Error::Degenerate(_) | Error::Numerical(_))) => {
            log::warn!("cloth alignment failed ({e}); using unwarped cloth edges");
            let img = resize_bilinear(cloth, out_w, out_h)?;
            let mask = resize_nearest_mask(cloth_mask, out_w, out_h);
            Ok(CannyCondition {
                image: masked_edges(&img, &mask, params)?,
                fallback: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// Everything the inpainting backend needs besides the image itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBundle {
    pub canny: RasterImage,
    pub pose: RasterImage,
    pub segmentation: RasterImage,
    pub reference: RasterImage,
    pub mask: BinaryMask,
    pub prompt: String,
    pub negative_prompt: String,
    pub scales: ScaleVector,
    pub seeds: Vec<u64>,
    pub region: BodyRegion,
    /// Degradations taken while building, e.g. `canny_fallback`.
    pub flags: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleMeta {
    prompt: String,
    negative_prompt: String,
    scales: ScaleVector,
    seeds: Vec<u64>,
    region: BodyRegion,
    flags: Vec<String>,
}

pub const BUNDLE_FILES: [&str; 6] = ["canny.png", "pose.png", "seg.png", "reference.png", "mask.png", "bundle.json"];

impl ConditionBundle {
    pub fn dims(&self) -> (usize, usize) {
        self.mask.dims()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        for img in [&self.canny, &self.pose, &self.segmentation, &self.reference] {
            if img.dims() != dims {
                return Err(Error::dims(dims, img.dims()));
            }
        }
        if self.prompt.trim().is_empty() {
            return Err(Error::param("bundle prompt is empty"));
        }
        self.scales.validate()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.canny.save_png(&dir.join("canny.png"))?;
        self.pose.save_png(&dir.join("pose.png"))?;
        self.segmentation.save_png(&dir.join("seg.png"))?;
        self.reference.save_png(&dir.join("reference.png"))?;
        self.mask.save_png(&dir.join("mask.png"))?;
        let meta = BundleMeta {
            prompt: self.prompt.clone(),
            negative_prompt: self.negative_prompt.clone(),
            scales: self.scales,
            seeds: self.seeds.clone(),
            region: self.region,
            flags: self.flags.clone(),
        };
        crate::fsutil::write_json(&dir.join("bundle.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: BundleMeta = crate::fsutil::read_json(&dir.join("bundle.json"))?;
        let bundle = Self {
            canny: RasterImage::load_png(&dir.join("canny.png"))?,
            pose: RasterImage::load_png(&dir.join("pose.png"))?,
            segmentation: RasterImage::load_png(&dir.join("seg.png"))?,
            reference: RasterImage::load_png(&dir.join("reference.png"))?,
            mask: BinaryMask::load_png(&dir.join("mask.png"))?,
            prompt: meta.prompt,
            negative_prompt: meta.negative_prompt,
            scales: meta.scales,
            seeds: meta.seeds,
            region: meta.region,
            flags: meta.flags,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

/// Union of the padded masks of all reports.
pub fn union_inpaint_mask(reports: &[ArtifactReport], dims: (usize, usize)) -> BinaryMask {
    let mut mask = BinaryMask::new(dims.0, dims.1);
    for r in reports {
        mask.union_with(&r.inpaint_mask);
    }
    mask
}

/// Builds the condition images, prompt and scales for repairing `reports`.
/// Conditions, prompt and scales are computed concurrently.
#[allow(clippy::too_many_arguments)]
pub fn build_bundle(
    inputs: &DetectorInputs,
    reports: &[ArtifactReport],
    detector: &DetectorConfig,
    cfg: &ConditioningConfig,
    seeds: &[u64],
    captioner: &dyn Captioner,
    scale_model: Option<&dyn ScaleModel>,
) -> Result<ConditionBundle> {
    inputs.validate()?;
    let dims = inputs.dims();
    let mask = union_inpaint_mask(reports, dims);

    let conditions = || -> Result<(CannyCondition, RasterImage, RasterImage, Vec<String>)> {
        let mut flags = Vec::new();
        let canny_cond = match (&inputs.reference, &inputs.cloth_mask, &inputs.reference_pose) {
            (Some(r), Some(m), Some(p)) => make_canny_condition(
                r,
                m,
                p,
                &inputs.target_pose,
                &detector.canny,
                Lambda::Relative(detector.warp_lambda_factor),
                dims.0,
                dims.1,
            )?,
            _ => {
                flags.push("canny_unavailable".to_string());
                CannyCondition {
                    image: RasterImage::filled(dims.0, dims.1, [0, 0, 0]),
                    fallback: true,
                }
            }
        };
        if canny_cond.fallback && flags.is_empty() {
            flags.push("canny_fallback".to_string());
        }
        let pose = render_pose_condition(&inputs.target_pose, dims.0, dims.1);
        let seg = make_seg_condition(&inputs.parsing)?;
        Ok((canny_cond, pose, seg, flags))
    };

    let prompting = || -> Result<(BodyRegion, RasterImage, Prompts, ScaleVector)> {
        let region = identify_mask_region(&mask, &inputs.parsing)?;
        let cloth = match inputs.task {
            Task::Vton => inputs.reference.as_ref(),
            Task::PoseTransfer => None,
        };
        let reference = choose_reference(&region, cloth, &inputs.distorted);
        let prompts = generate_prompt(reference, &region, captioner, &cfg.prompt);
        let reference = if reference.dims() == dims {
            reference.clone()
        } else {
            resize_bilinear(reference, dims.0, dims.1)?
        };
        let scales = generate_scales(reports, &cfg.scales, scale_model.map(|m| (m, &inputs.distorted, &mask)))?;
        Ok((region, reference, prompts, scales))
    };

    if reports.is_empty() {
        return Err(Error::NothingToRepair);
    }
    let (cond, prom) = rayon::join(conditions, prompting);
    let (canny_cond, pose, segmentation, mut flags) = cond?;
    let (region, reference, prompts, scales) = prom?;
    if prompts.caption_failed {
        flags.push("caption_fallback".to_string());
    }
    let bundle = ConditionBundle {
        canny: canny_cond.image,
        pose,
        segmentation,
        reference,
        mask,
        prompt: prompts.prompt,
        negative_prompt: prompts.negative_prompt,
        scales,
        seeds: seeds.to_vec(),
        region,
        flags,
    };
    bundle.validate()?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Joint;

    fn striped(w: usize, h: usize) -> RasterImage {
        let mut img = RasterImage::filled(w, h, [240, 240, 240]);
        for y in 0..h {
            if (y / 8) % 2 == 1 {
                for x in 0..w {
                    img.set(x, y, [20, 30, 90]);
                }
            }
        }
        img
    }

    fn torso_pose(dx: f64, dy: f64) -> PoseKeypoints {
        let pts = [
            ("neck", 50.0, 20.0),
            ("right_shoulder", 30.0, 25.0),
            ("left_shoulder", 70.0, 25.0),
            ("right_hip", 35.0, 80.0),
            ("left_hip", 65.0, 80.0),
        ];
        PoseKeypoints::new(pts.iter().map(|&(n, x, y)| Joint::new(n, x + dx, y + dy, 0.9)).collect())
    }

    fn cloth_mask() -> BinaryMask {
        BinaryMask::from_fn(100, 100, |x, y| (25..75).contains(&x) && (15..85).contains(&y))
    }

    #[test]
    fn identity_pose_matches_plain_canny() {
        let cloth = striped(100, 100);
        let mask = cloth_mask();
        let p = torso_pose(0.0, 0.0);
        let params = CannyParams::default();
        let c = make_canny_condition(&cloth, &mask, &p, &p, &params, Lambda::Relative(1e-3), 100, 100).unwrap();
        assert!(!c.fallback);
        assert_eq!(c.image, masked_edges(&cloth, &mask, &params).unwrap());
    }

    #[test]
    fn constant_cloth_gives_black() {
        let cloth = RasterImage::filled(100, 100, [90, 10, 10]);
        let p = torso_pose(0.0, 0.0);
        let c = make_canny_condition(&cloth, &cloth_mask(), &p, &torso_pose(3.0, 2.0), &CannyParams::default(), Lambda::Fixed(0.0), 100, 100)
            .unwrap();
        assert!(c.image.pixels().all(|p| p == [0, 0, 0]));
    }

    #[test]
    fn translated_pose_translates_edges() {
        let cloth = striped(100, 100);
        let mask = cloth_mask();
        let params = CannyParams::default();
        let (dx, dy) = (7isize, 5isize);
        let c = make_canny_condition(
            &cloth,
            &mask,
            &torso_pose(0.0, 0.0),
            &torso_pose(dx as f64, dy as f64),
            &params,
            Lambda::Fixed(0.0),
            100,
            100,
        )
        .unwrap();
        let base = masked_edges(&cloth, &mask, &params).unwrap();
        let lit = |img: &RasterImage, x: isize, y: isize| {
            x >= 0 && y >= 0 && x < 100 && y < 100 && img.get(x as usize, y as usize) == [255, 255, 255]
        };
        let mut checked = 0;
        for y in 0..100isize {
            for x in 0..100isize {
                if lit(&base, x, y) && x + dx < 99 && y + dy < 99 {
                    checked += 1;
                    let near = (-1..=1).any(|oy| (-1..=1).any(|ox| lit(&c.image, x + dx + ox, y + dy + oy)));
                    assert!(near, "edge at ({x},{y}) not translated");
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn too_few_joints_falls_back() {
        let cloth = striped(100, 100);
        let p = PoseKeypoints::new(vec![Joint::new("neck", 50.0, 20.0, 0.9)]);
        let c = make_canny_condition(&cloth, &cloth_mask(), &p, &p, &CannyParams::default(), Lambda::Fixed(0.0), 100, 100).unwrap();
        assert!(c.fallback);
    }
}
