//! Synthetic artifact injection over procedurally rendered people.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scene::{Scene, Similarity, PALETTE, SCENE_HEIGHT, SCENE_WIDTH, STRIPE_BAND};
use super::{AnnotatedMask, DatasetInstance, IndexEntry, Injection, InstanceMeta, Manifest, MaskLabel, Profile, Resolutions};
use crate::conditioning::identify_mask_region;
use crate::detector::{ArtifactClass, Detection, Task};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, BoundingBox, LabelMap, RasterImage};
use crate::parsing::{BACKGROUND, UPPER_CLOTHES};
use crate::pose::PoseKeypoints;
use crate::rng::SplitMix64;
use crate::vision::{disc_mask, erode};
use crate::warp::solve_tps;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    /// Saturated color patch.
    ColorTexture,
    /// Local warp of a wrist region plus a displaced observed joint.
    Deformation,
    /// Stripe texture erased inside a shirt patch.
    ClothDesign,
}

impl InjectionKind {
    pub fn class(self) -> ArtifactClass {
        match self {
            InjectionKind::ColorTexture => ArtifactClass::ColorTexture,
            InjectionKind::Deformation => ArtifactClass::Deformation,
            InjectionKind::ClothDesign => ArtifactClass::ClothDesign,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InjectionKind::ColorTexture => "color_texture",
            InjectionKind::Deformation => "deformation",
            InjectionKind::ClothDesign => "cloth_design",
        }
    }
}

/// How many instances of each kind to generate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthPlan {
    pub name: String,
    pub task: Task,
    pub color_texture: usize,
    pub deformation: usize,
    pub cloth_design: usize,
    /// Instances carrying both a color patch and a deformation.
    #[serde(default)]
    pub mixed: usize,
    /// Control instances without artifacts.
    #[serde(default)]
    pub clean: usize,
}

impl SynthPlan {
    pub fn balanced(per_class: usize, clean: usize) -> Self {
        Self {
            name: "synthetic".into(),
            task: Task::PoseTransfer,
            color_texture: per_class,
            deformation: per_class,
            cloth_design: per_class,
            mixed: 0,
            clean,
        }
    }

    pub fn total(&self) -> usize {
        self.color_texture + self.deformation + self.cloth_design + self.mixed + self.clean
    }
}

/// Artifact-free source material for injection.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanSample {
    pub image: RasterImage,
    pub parsing: LabelMap,
    pub pose: PoseKeypoints,
    pub detections: Vec<Detection>,
    pub reference: RasterImage,
    pub reference_pose: Option<PoseKeypoints>,
    pub reference_cloth_mask: Option<BinaryMask>,
}

impl CleanSample {
    /// Renders a random person and a rescaled, shifted view of the same
    /// person as the reference. For try-on the reference keeps only the
    /// shirt, on white.
    pub fn generate(seed: u64, task: Task) -> CleanSample {
        let mut rng = SplitMix64::new(seed);
        let scene = Scene::random(&mut rng);
        let target = scene.render(&Similarity::IDENTITY, SCENE_WIDTH, SCENE_HEIGHT, rng.next_u64());
        let t_ref = Similarity {
            scale: rng.range_f64(0.9, 0.95),
            center: (SCENE_WIDTH as f64 / 2.0, SCENE_HEIGHT as f64 / 2.0),
            shift: (rng.range_f64(-4.0, 4.0), rng.range_f64(-4.0, 4.0)),
        };
        let reference = scene.render(&t_ref, SCENE_WIDTH, SCENE_HEIGHT, rng.next_u64());
        let (w, h) = reference.image.dims();
        let cloth_mask = BinaryMask::from_fn(w, h, |x, y| reference.parsing.get(x, y) == UPPER_CLOTHES);
        let ref_image = match task {
            Task::PoseTransfer => reference.image,
            Task::Vton => {
                let mut img = reference.image;
                for y in 0..h {
                    for x in 0..w {
                        if !cloth_mask.get(x, y) {
                            img.set(x, y, [255, 255, 255]);
                        }
                    }
                }
                img
            }
        };
        CleanSample {
            image: target.image,
            parsing: target.parsing,
            pose: target.pose,
            detections: target.detections,
            reference: ref_image,
            reference_pose: Some(reference.pose),
            reference_cloth_mask: Some(cloth_mask),
        }
    }
}

/// Saturated colors, each far from every scene color.
pub const INJECTION_COLORS: [[u8; 3]; 7] = [
    [40, 200, 60],
    [220, 40, 200],
    [250, 140, 0],
    [0, 210, 210],
    [240, 230, 0],
    [210, 20, 20],
    [120, 255, 120],
];

fn rgb_dist(a: [u8; 3], b: [u8; 3]) -> f64 {
    (0..3).map(|c| (a[c] as f64 - b[c] as f64).powi(2)).sum::<f64>().sqrt()
}

fn noisy(rng: &mut SplitMix64, c: [u8; 3]) -> [u8; 3] {
    c.map(|v| (v as i64 + rng.range_usize(0, 7) as i64 - 3).clamp(0, 255) as u8)
}

fn fill_rect(img: &mut RasterImage, b: &BoundingBox, color: [u8; 3], rng: &mut SplitMix64) {
    for y in b.y0..=b.y1 {
        for x in b.x0..=b.x1 {
            img.set(x, y, noisy(rng, color));
        }
    }
}

/// Outcome of one injection.
#[derive(Debug, Clone, PartialEq)]
pub struct Injected {
    pub mask: BinaryMask,
    pub record: Injection,
}

fn person_bbox(parsing: &LabelMap) -> Result<BoundingBox> {
    let (w, h) = parsing.dims();
    BinaryMask::from_fn(w, h, |x, y| parsing.get(x, y) != BACKGROUND)
        .bbox()
        .ok_or_else(|| Error::EmptyRegion("clean sample has no person pixels".into()))
}

fn inject_color(img: &mut RasterImage, parsing: &LabelMap, avoid: Option<&BinaryMask>, rng: &mut SplitMix64) -> Result<Injected> {
    let (w, h) = img.dims();
    let person = person_bbox(parsing)?;
    let start = rng.range_usize(0, INJECTION_COLORS.len());
    let color = (0..INJECTION_COLORS.len())
        .map(|i| INJECTION_COLORS[(start + i) % INJECTION_COLORS.len()])
        .find(|&c| PALETTE.iter().all(|&p| rgb_dist(c, p) > 100.0))
        .expect("injection colors are far from the scene palette");
    for _ in 0..200 {
        let area = rng.range_f64(0.03, 0.10) * (w * h) as f64;
        let aspect = rng.range_f64(0.75, 1.33);
        let pw = ((area * aspect).sqrt().round() as usize).clamp(2, w);
        let ph = ((area / pw as f64).round() as usize).clamp(2, h);
        let lo_x = (person.x0 as f64).max(pw as f64 / 2.0);
        let hi_x = (person.x1 as f64).min(w as f64 - pw as f64 / 2.0);
        let lo_y = (person.y0 as f64).max(ph as f64 / 2.0);
        let hi_y = (person.y1 as f64).min(h as f64 - ph as f64 / 2.0);
        if lo_x >= hi_x || lo_y >= hi_y {
            continue;
        }
        let cx = rng.range_f64(lo_x, hi_x);
        let cy = rng.range_f64(lo_y, hi_y);
        let x0 = (cx - pw as f64 / 2.0).round().max(0.0) as usize;
        let y0 = (cy - ph as f64 / 2.0).round().max(0.0) as usize;
        let b = BoundingBox::new(x0, y0, (x0 + pw - 1).min(w - 1), (y0 + ph - 1).min(h - 1));
        let mask = b.to_mask(w, h);
        if avoid.is_some_and(|a| a.intersects(&mask)) {
            continue;
        }
        fill_rect(img, &b, color, rng);
        return Ok(Injected {
            mask,
            record: Injection {
                kind: InjectionKind::ColorTexture,
                bbox: b,
                color: Some(color),
                joint: None,
                displacement: None,
            },
        });
    }
    Err(Error::EmptyRegion("no room for a color patch".into()))
}

/// Radius of the deformed disc as a fraction of the image diagonal.
pub const DEFORM_RADIUS_FRACTION: f64 = 0.06;
/// Observed-joint displacement as a fraction of the image diagonal.
pub const DEFORM_JOINT_FRACTION: f64 = 0.1;

fn inject_deformation(
    img: &mut RasterImage,
    observed: &mut PoseKeypoints,
    rng: &mut SplitMix64,
) -> Result<Injected> {
    let (w, h) = img.dims();
    let diag = ((w * w + h * h) as f64).sqrt();
    let joint = if rng.next_f64() < 0.5 { "left_wrist" } else { "right_wrist" };
    let j = observed
        .confident(joint)
        .ok_or_else(|| Error::param(format!("clean sample lacks a confident {joint}")))?
        .clone();
    let radius = DEFORM_RADIUS_FRACTION * diag;
    let shift = DEFORM_JOINT_FRACTION * diag;

    let mut dir = (1.0, 0.0);
    for _ in 0..64 {
        let a = rng.range_f64(0.0, std::f64::consts::TAU);
        dir = (a.cos(), a.sin());
        let (nx, ny) = (j.x + shift * dir.0, j.y + shift * dir.1);
        if nx >= 0.0 && ny >= 0.0 && nx <= (w - 1) as f64 && ny <= (h - 1) as f64 {
            break;
        }
    }
    let displacement = [shift * dir.0, shift * dir.1];

    // Output-to-source TPS: the rim stays put, the center is pulled along
    // `dir` by under half the radius.
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for k in 0..12 {
        let a = k as f64 / 12.0 * std::f64::consts::TAU;
        let p = (j.x + radius * a.cos(), j.y + radius * a.sin());
        src.push(p);
        dst.push(p);
    }
    let pull = 0.45 * radius;
    dst.push((j.x + pull * dir.0, j.y + pull * dir.1));
    src.push((j.x, j.y));
    let inverse = solve_tps(&dst, &src, 0.0)?;

    let mask = disc_mask(w, h, j.x, j.y, radius);
    let original = img.clone();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let (sx, sy) = inverse.apply((x as f64, y as f64));
            let (sx, sy) = (sx.round().clamp(0.0, (w - 1) as f64) as usize, sy.round().clamp(0.0, (h - 1) as f64) as usize);
            img.set(x, y, original.get(sx, sy));
        }
    }
    let o = observed.get_mut(joint).expect("checked above");
    o.x += displacement[0];
    o.y += displacement[1];
    let bbox = mask.bbox().ok_or_else(|| Error::EmptyRegion("deformation disc is empty".into()))?;
    Ok(Injected {
        mask,
        record: Injection {
            kind: InjectionKind::Deformation,
            bbox,
            color: None,
            joint: Some(joint.to_string()),
            displacement: Some(displacement),
        },
    })
}

fn inject_cloth(img: &mut RasterImage, parsing: &LabelMap, rng: &mut SplitMix64) -> Result<Injected> {
    let (w, h) = img.dims();
    let shirt = BinaryMask::from_fn(w, h, |x, y| parsing.get(x, y) == UPPER_CLOTHES);
    let inner = erode(&shirt, 4);
    // Summed-area table for fast "rectangle inside region" checks.
    let mut sat = vec![0usize; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * (w + 1) + x + 1] =
                inner.get(x, y) as usize + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
        }
    }
    let rect_sum = |x0: usize, y0: usize, pw: usize, ph: usize| {
        sat[(y0 + ph) * (w + 1) + x0 + pw] + sat[y0 * (w + 1) + x0] - sat[y0 * (w + 1) + x0 + pw] - sat[(y0 + ph) * (w + 1) + x0]
    };
    for _ in 0..20 {
        let pw = rng.range_usize(26, 37).min(w);
        let ph = rng.range_usize(26, 37).min(h);
        let mut spots = Vec::new();
        for y0 in 0..=h - ph {
            for x0 in 0..=w - pw {
                if rect_sum(x0, y0, pw, ph) == pw * ph {
                    spots.push((x0, y0));
                }
            }
        }
        if spots.is_empty() {
            continue;
        }
        let (x0, y0) = spots[rng.range_usize(0, spots.len())];
        let b = BoundingBox::new(x0, y0, x0 + pw - 1, y0 + ph - 1);
        let fill = if rng.next_f64() < 0.5 { PALETTE[3] } else { PALETTE[4] };
        fill_rect(img, &b, fill, rng);
        return Ok(Injected {
            mask: b.to_mask(w, h),
            record: Injection {
                kind: InjectionKind::ClothDesign,
                bbox: b,
                color: Some(fill),
                joint: None,
                displacement: None,
            },
        });
    }
    Err(Error::EmptyRegion(format!(
        "shirt region too small for a {STRIPE_BAND}-band texture patch"
    )))
}

/// Applies `kinds` in order to a copy of the sample. Later injections avoid
/// earlier masks where the injector supports it.
pub fn inject(sample: &CleanSample, kinds: &[InjectionKind], rng: &mut SplitMix64) -> Result<(RasterImage, PoseKeypoints, Vec<Injected>)> {
    let mut img = sample.image.clone();
    let mut observed = sample.pose.clone();
    let mut out: Vec<Injected> = Vec::new();
    let (w, h) = img.dims();
    for &kind in kinds {
        let mut avoid = BinaryMask::new(w, h);
        for i in &out {
            avoid.union_with(&crate::vision::dilate(&i.mask, 24));
        }
        let injected = match kind {
            InjectionKind::ColorTexture => inject_color(&mut img, &sample.parsing, Some(&avoid), rng)?,
            InjectionKind::Deformation => inject_deformation(&mut img, &mut observed, rng)?,
            InjectionKind::ClothDesign => inject_cloth(&mut img, &sample.parsing, rng)?,
        };
        out.push(injected);
    }
    Ok((img, observed, out))
}

/// Writes a fresh corpus at `root` following `plan`. Fails if `root`
/// already has content.
pub fn synth_corpus(root: &Path, plan: &SynthPlan, seed: u64) -> Result<Manifest> {
    if root.exists() && std::fs::read_dir(root)?.next().is_some() {
        return Err(Error::param(format!("{} is not empty", root.display())));
    }
    std::fs::create_dir_all(root)?;
    let groups: [(&str, usize, &[InjectionKind]); 5] = [
        ("color_texture", plan.color_texture, &[InjectionKind::ColorTexture]),
        ("deformation", plan.deformation, &[InjectionKind::Deformation]),
        ("cloth_design", plan.cloth_design, &[InjectionKind::ClothDesign]),
        ("mixed", plan.mixed, &[InjectionKind::Deformation, InjectionKind::ColorTexture]),
        ("clean", plan.clean, &[]),
    ];
    let mut master = SplitMix64::new(seed);
    let mut index = Vec::with_capacity(plan.total());
    for (prefix, count, kinds) in groups {
        for i in 0..count {
            let id = format!("{prefix}_{i:03}");
            let instance_seed = master.next_u64();
            let sample = CleanSample::generate(instance_seed, plan.task);
            let mut rng = SplitMix64::new(instance_seed).fork(0x1A7E);
            let (distorted, observed, injected) = inject(&sample, kinds, &mut rng)?;
            let mut masks = Vec::new();
            for inj in &injected {
                let region = identify_mask_region(&inj.mask, &sample.parsing)?;
                masks.push(AnnotatedMask {
                    mask: inj.mask.clone(),
                    label: MaskLabel {
                        region: region.label,
                        class: inj.record.kind.class(),
                    },
                });
            }
            let instance = DatasetInstance {
                id: id.clone(),
                task: plan.task,
                clean: kinds.is_empty(),
                distorted,
                masks,
                target: sample.image.clone(),
                references: vec![sample.reference.clone()],
                reference_pose: sample.reference_pose.clone(),
                reference_cloth_mask: sample.reference_cloth_mask.clone(),
                detections: sample.detections.clone(),
                target_pose: sample.pose.clone(),
                observed_pose: observed,
                parsing: sample.parsing.clone(),
                meta: Some(InstanceMeta {
                    seed: instance_seed,
                    injections: injected.iter().map(|i| i.record.clone()).collect(),
                }),
            };
            instance.save_dir(&root.join(&id))?;
            index.push(IndexEntry {
                id,
                clean: kinds.is_empty(),
            });
        }
    }
    let manifest = Manifest {
        format: super::MANIFEST_FORMAT,
        name: plan.name.clone(),
        task: plan.task,
        profile: Profile::Synthetic,
        count: index.len(),
        resolutions: Resolutions {
            distorted: [SCENE_WIDTH, SCENE_HEIGHT],
            target: [SCENE_WIDTH, SCENE_HEIGHT],
        },
        index,
    };
    manifest.save(root)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn injection_colors_far_from_scene() {
        for c in INJECTION_COLORS {
            for p in PALETTE {
                assert!(rgb_dist(c, p) > 100.0, "{c:?} vs {p:?}");
            }
        }
    }

    #[test]
    fn color_patch_size_and_bounds() {
        let sample = CleanSample::generate(3, Task::PoseTransfer);
        let mut rng = SplitMix64::new(9);
        for _ in 0..10 {
            let (img, _, inj) = inject(&sample, &[InjectionKind::ColorTexture], &mut rng).unwrap();
            let area = inj[0].mask.count() as f64 / (SCENE_WIDTH * SCENE_HEIGHT) as f64;
            assert!((0.028..=0.105).contains(&area), "{area}");
            assert_ne!(img, sample.image);
        }
    }

    #[test]
    fn deformation_moves_exactly_one_joint() {
        let sample = CleanSample::generate(4, Task::PoseTransfer);
        let mut rng = SplitMix64::new(1);
        let (img, observed, inj) = inject(&sample, &[InjectionKind::Deformation], &mut rng).unwrap();
        let joint = inj[0].record.joint.clone().unwrap();
        let diag = ((SCENE_WIDTH.pow(2) + SCENE_HEIGHT.pow(2)) as f64).sqrt();
        for (a, b) in sample.pose.joints.iter().zip(&observed.joints) {
            let d = (a.x - b.x).hypot(a.y - b.y);
            if a.name == joint {
                assert!((d - 0.1 * diag).abs() < 1e-9);
            } else {
                assert_eq!(d, 0.0, "{}", a.name);
            }
        }
        for y in 0..SCENE_HEIGHT {
            for x in 0..SCENE_WIDTH {
                if !inj[0].mask.get(x, y) {
                    assert_eq!(img.get(x, y), sample.image.get(x, y));
                }
            }
        }
    }

    #[test]
    fn cloth_patch_inside_shirt() {
        let sample = CleanSample::generate(5, Task::PoseTransfer);
        let mut rng = SplitMix64::new(2);
        let (_, _, inj) = inject(&sample, &[InjectionKind::ClothDesign], &mut rng).unwrap();
        let (w, h) = sample.parsing.dims();
        let shirt = BinaryMask::from_fn(w, h, |x, y| sample.parsing.get(x, y) == UPPER_CLOTHES);
        assert!(inj[0].mask.is_subset_of(&shirt));
    }
}
