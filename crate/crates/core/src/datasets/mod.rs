//! Distorted-image corpora on disk: manifest, per-instance directories,
//! validation, statistics and a synthetic artifact injector.
//!
//! Layout:
//!
//! ```text
//! <root>/manifest.json
//! <root>/<id>/distorted.png  target.png  ref_<m>.png  parsing.png
//!            mask_<n>.png  mask_<n>.json
//!            detections.json  pose_target.json  pose_observed.json
//!            [ref_0_pose.json  ref_0_cloth_mask.png  meta.json]
//! ```

mod scene;
mod stats;
mod synth;
mod validate;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use scene::{render_scene, RenderedScene, Scene, Similarity, PALETTE as SCENE_PALETTE, SCENE_HEIGHT, SCENE_WIDTH};
pub use stats::{corpus_stats, CorpusStats};
pub use synth::{
    inject, synth_corpus, CleanSample, Injected, InjectionKind, SynthPlan, DEFORM_JOINT_FRACTION, DEFORM_RADIUS_FRACTION,
    INJECTION_COLORS,
};
pub use validate::{validate_corpus, ValidationReport, Violation};

use crate::detector::{load_detections, ArtifactClass, Detection, DetectorInputs, Task};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, BoundingBox, LabelMap, RasterImage};
use crate::parsing::BodyRegionLabel;
use crate::pose::PoseKeypoints;
use crate::vision::resize_nearest_mask;

pub const MANIFEST_FORMAT: u32 = 1;
pub const DDI_COUNT: usize = 3673;
pub const VDI_COUNT: usize = 2032;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Pose-transfer corpus: distorted/mask 352x512, target/refs 750x1101.
    Ddi,
    /// Try-on corpus: everything 768x1024.
    Vdi,
    /// Generated corpora; resolutions as declared.
    Synthetic,
}

impl Profile {
    /// Canonical `(distorted, target)` resolutions, if fixed.
    pub fn canonical(self) -> Option<Resolutions> {
        match self {
            Profile::Ddi => Some(Resolutions {
                distorted: [352, 512],
                target: [750, 1101],
            }),
            Profile::Vdi => Some(Resolutions {
                distorted: [768, 1024],
                target: [768, 1024],
            }),
            Profile::Synthetic => None,
        }
    }
}

/// `[width, height]` of distorted images and masks, and of targets and
/// references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolutions {
    pub distorted: [usize; 2],
    pub target: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub id: String,
    /// Control instance without artifacts; may carry zero masks.
    #[serde(default)]
    pub clean: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: u32,
    pub name: String,
    pub task: Task,
    pub profile: Profile,
    pub count: usize,
    pub resolutions: Resolutions,
    pub index: Vec<IndexEntry>,
}

impl Manifest {
    pub fn load(root: &Path) -> Result<Self> {
        let m: Manifest = crate::fsutil::read_json(&root.join("manifest.json"))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::sidecar(
                root.join("manifest.json"),
                format!("unsupported format {}, expected {MANIFEST_FORMAT}", m.format),
            ));
        }
        Ok(m)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        crate::fsutil::write_json(&root.join("manifest.json"), self)
    }

    pub fn entry(&self, id: &str) -> Option<&IndexEntry> {
        self.index.iter().find(|e| e.id == id)
    }
}

/// Labels stored next to each ground-truth mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskLabel {
    pub region: BodyRegionLabel,
    pub class: ArtifactClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedMask {
    pub mask: BinaryMask,
    pub label: MaskLabel,
}

/// Record of one synthetic injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub kind: InjectionKind,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[u8; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<String>,
    /// Pixel displacement applied to the observed joint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub seed: u64,
    pub injections: Vec<Injection>,
}

/// One corpus entry with all rasters decoded.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetInstance {
    pub id: String,
    pub task: Task,
    pub clean: bool,
    pub distorted: RasterImage,
    pub masks: Vec<AnnotatedMask>,
    pub target: RasterImage,
    pub references: Vec<RasterImage>,
    pub reference_pose: Option<PoseKeypoints>,
    pub reference_cloth_mask: Option<BinaryMask>,
    pub detections: Vec<Detection>,
    pub target_pose: PoseKeypoints,
    pub observed_pose: PoseKeypoints,
    pub parsing: LabelMap,
    pub meta: Option<InstanceMeta>,
}

/// Load-time notes, e.g. masks resized to the distorted resolution.
pub type LoadWarnings = Vec<String>;

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingFile(path))
    }
}

impl DatasetInstance {
    pub fn dims(&self) -> (usize, usize) {
        self.distorted.dims()
    }

    /// Detector view of the instance. The first reference is used for
    /// alignment and palette comparison.
    pub fn detector_inputs(&self) -> DetectorInputs {
        DetectorInputs {
            task: self.task,
            distorted: self.distorted.clone(),
            reference: self.references.first().cloned(),
            reference_pose: self.reference_pose.clone(),
            cloth_mask: self.reference_cloth_mask.clone(),
            target_pose: self.target_pose.clone(),
            observed_pose: self.observed_pose.clone(),
            detections: self.detections.clone(),
            parsing: self.parsing.clone(),
        }
    }

    pub fn truth(&self) -> Vec<(BinaryMask, ArtifactClass)> {
        self.masks.iter().map(|m| (m.mask.clone(), m.label.class)).collect()
    }

    /// Target resized (bilinear) to the distorted resolution when the corpus
    /// stores it larger, as in DDI.
    pub fn target_at_output(&self) -> Result<RasterImage> {
        let (w, h) = self.dims();
        if self.target.dims() == (w, h) {
            Ok(self.target.clone())
        } else {
            crate::vision::resize_bilinear(&self.target, w, h)
        }
    }

    /// Union of all ground-truth masks.
    pub fn truth_union(&self) -> BinaryMask {
        let (w, h) = self.dims();
        let mut u = BinaryMask::new(w, h);
        for m in &self.masks {
            u.union_with(&m.mask);
        }
        u
    }

    /// Reads `<dir>` as an instance of the given task.
    pub fn load_dir(dir: &Path, id: &str, task: Task, clean: bool) -> Result<(Self, LoadWarnings)> {
        if !dir.is_dir() {
            return Err(Error::MissingFile(dir.to_path_buf()));
        }
        let mut warnings = Vec::new();
        let distorted = RasterImage::load_png(&require(dir.join("distorted.png"))?)?;
        let dims = distorted.dims();
        let target = RasterImage::load_png(&require(dir.join("target.png"))?)?;

        let mut references = Vec::new();
        loop {
            let p = dir.join(format!("ref_{}.png", references.len()));
            if !p.exists() {
                break;
            }
            references.push(RasterImage::load_png(&p)?);
        }

        let mut masks = Vec::new();
        loop {
            let n = masks.len();
            let png_path = dir.join(format!("mask_{n}.png"));
            if !png_path.exists() {
                break;
            }
            let label: MaskLabel = crate::fsutil::read_json(&dir.join(format!("mask_{n}.json")))?;
            let mut mask = BinaryMask::load_png(&png_path)?;
            if mask.dims() != dims {
                warnings.push(format!(
                    "mask_{n}.png is {}x{}, resized to {}x{} (nearest)",
                    mask.width, mask.height, dims.0, dims.1
                ));
                log::warn!("{id}: {}", warnings.last().expect("just pushed"));
                mask = resize_nearest_mask(&mask, dims.0, dims.1);
            }
            masks.push(AnnotatedMask { mask, label });
        }
        if masks.is_empty() && !clean {
            return Err(Error::MissingFile(dir.join("mask_0.png")));
        }

        let parsing = LabelMap::load_png(&require(dir.join("parsing.png"))?)?;
        if parsing.dims() != dims {
            return Err(Error::dims(dims, parsing.dims()));
        }
        let target_pose = PoseKeypoints::load(&dir.join("pose_target.json"))?;
        let observed_pose = PoseKeypoints::load(&dir.join("pose_observed.json"))?;
        let detections = load_detections(&dir.join("detections.json"))?;

        let ref_pose_path = dir.join("ref_0_pose.json");
        let reference_pose = if ref_pose_path.exists() {
            Some(PoseKeypoints::load(&ref_pose_path)?)
        } else {
            None
        };
        let cloth_path = dir.join("ref_0_cloth_mask.png");
        let reference_cloth_mask = if cloth_path.exists() {
            let m = BinaryMask::load_png(&cloth_path)?;
            if let Some(r) = references.first() {
                if r.dims() != m.dims() {
                    return Err(Error::dims(r.dims(), m.dims()));
                }
            }
            Some(m)
        } else {
            None
        };
        let meta_path = dir.join("meta.json");
        let meta = if meta_path.exists() {
            Some(crate::fsutil::read_json(&meta_path)?)
        } else {
            None
        };

        Ok((
            Self {
                id: id.to_string(),
                task,
                clean,
                distorted,
                masks,
                target,
                references,
                reference_pose,
                reference_cloth_mask,
                detections,
                target_pose,
                observed_pose,
                parsing,
                meta,
            },
            warnings,
        ))
    }

    /// Writes the instance directory atomically.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        crate::fsutil::write_dir_atomic(dir, |d| {
            self.distorted.save_png(&d.join("distorted.png"))?;
            self.target.save_png(&d.join("target.png"))?;
            for (i, r) in self.references.iter().enumerate() {
                r.save_png(&d.join(format!("ref_{i}.png")))?;
            }
            for (i, m) in self.masks.iter().enumerate() {
                m.mask.save_png(&d.join(format!("mask_{i}.png")))?;
                crate::fsutil::write_json(&d.join(format!("mask_{i}.json")), &m.label)?;
            }
            self.parsing.save_png(&d.join("parsing.png"))?;
            self.target_pose.save(&d.join("pose_target.json"))?;
            self.observed_pose.save(&d.join("pose_observed.json"))?;
            crate::fsutil::write_json(&d.join("detections.json"), &self.detections)?;
            if let Some(p) = &self.reference_pose {
                p.save(&d.join("ref_0_pose.json"))?;
            }
            if let Some(m) = &self.reference_cloth_mask {
                m.save_png(&d.join("ref_0_cloth_mask.png"))?;
            }
            if let Some(meta) = &self.meta {
                crate::fsutil::write_json(&d.join("meta.json"), meta)?;
            }
            Ok(())
        })
    }
}

/// Loads instance `id` of the corpus at `root`.
pub fn load_instance(root: &Path, id: &str) -> Result<(DatasetInstance, LoadWarnings)> {
    let manifest = Manifest::load(root)?;
    let clean = manifest.entry(id).map(|e| e.clean).unwrap_or(false);
    DatasetInstance::load_dir(&root.join(id), id, manifest.task, clean)
}

/// Location and corpus-level attributes of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRef {
    pub id: String,
    pub dir: PathBuf,
    pub task: Task,
    pub clean: bool,
}

impl InstanceRef {
    pub fn load(&self) -> Result<(DatasetInstance, LoadWarnings)> {
        DatasetInstance::load_dir(&self.dir, &self.id, self.task, self.clean)
    }
}

/// Every indexed instance of the corpus at `root`, in index order.
pub fn corpus_refs(root: &Path) -> Result<(Manifest, Vec<InstanceRef>)> {
    let manifest = Manifest::load(root)?;
    let refs = manifest
        .index
        .iter()
        .map(|e| InstanceRef {
            id: e.id.clone(),
            dir: root.join(&e.id),
            task: manifest.task,
            clean: e.clean,
        })
        .collect();
    Ok((manifest, refs))
}

/// Instance directories present under `root` (sorted by name).
pub fn instance_dirs(root: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.file_type()?.is_dir() && !name.starts_with('.') {
            ids.push(name);
        }
    }
    ids.sort();
    Ok(ids)
}
