use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{instance_dirs, Manifest, MaskLabel, Resolutions};
use crate::detector::Detection;
use crate::error::Result;
use crate::pose::PoseKeypoints;

/// One problem found in a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Declared count disagrees with the index or the directories on disk.
    CountMismatch { declared: usize, indexed: usize, on_disk: usize },
    /// Profile with fixed resolutions declares different ones.
    ProfileResolution { expected: Resolutions, declared: Resolutions },
    DuplicateId { id: String },
    MissingInstance { id: String },
    UnindexedInstance { id: String },
    MissingFile { id: String, file: String },
    Resolution { id: String, file: String, expected: [usize; 2], actual: [usize; 2] },
    Malformed { id: String, file: String, reason: String },
    NoMasks { id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub instances_checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count_mismatches(&self) -> usize {
        self.violations
            .iter()
            .filter(|v| matches!(v, Violation::CountMismatch { .. }))
            .count()
    }
}

fn png_dims(path: &Path) -> std::result::Result<[usize; 2], String> {
    let file = File::open(path).map_err(|e| e.to_string())?;
    let reader = png::Decoder::new(BufReader::new(file)).read_info().map_err(|e| e.to_string())?;
    let info = reader.info();
    Ok([info.width as usize, info.height as usize])
}

fn check_png(dir: &Path, id: &str, file: &str, expected: [usize; 2], out: &mut Vec<Violation>) {
    let path = dir.join(file);
    if !path.exists() {
        out.push(Violation::MissingFile {
            id: id.into(),
            file: file.into(),
        });
        return;
    }
    match png_dims(&path) {
        Ok(actual) if actual != expected => out.push(Violation::Resolution {
            id: id.into(),
            file: file.into(),
            expected,
            actual,
        }),
        Ok(_) => {}
        Err(reason) => out.push(Violation::Malformed {
            id: id.into(),
            file: file.into(),
            reason,
        }),
    }
}

fn check_json<T: serde::de::DeserializeOwned>(dir: &Path, id: &str, file: &str, required: bool, out: &mut Vec<Violation>) {
    let path = dir.join(file);
    if !path.exists() {
        if required {
            out.push(Violation::MissingFile {
                id: id.into(),
                file: file.into(),
            });
        }
        return;
    }
    if let Err(e) = crate::fsutil::read_json::<T>(&path) {
        out.push(Violation::Malformed {
            id: id.into(),
            file: file.into(),
            reason: e.to_string(),
        });
    }
}

fn check_instance(root: &Path, id: &str, clean: bool, res: &Resolutions) -> Vec<Violation> {
    let dir = root.join(id);
    let mut out = Vec::new();
    check_png(&dir, id, "distorted.png", res.distorted, &mut out);
    check_png(&dir, id, "parsing.png", res.distorted, &mut out);
    check_png(&dir, id, "target.png", res.target, &mut out);
    check_png(&dir, id, "ref_0.png", res.target, &mut out);
    let mut m = 1;
    while dir.join(format!("ref_{m}.png")).exists() {
        check_png(&dir, id, &format!("ref_{m}.png"), res.target, &mut out);
        m += 1;
    }
    let mut n = 0;
    while dir.join(format!("mask_{n}.png")).exists() {
        check_png(&dir, id, &format!("mask_{n}.png"), res.distorted, &mut out);
        check_json::<MaskLabel>(&dir, id, &format!("mask_{n}.json"), true, &mut out);
        n += 1;
    }
    if n == 0 && !clean {
        out.push(Violation::NoMasks { id: id.into() });
    }
    check_json::<Vec<Detection>>(&dir, id, "detections.json", true, &mut out);
    check_json::<PoseKeypoints>(&dir, id, "pose_target.json", true, &mut out);
    check_json::<PoseKeypoints>(&dir, id, "pose_observed.json", true, &mut out);
    check_json::<PoseKeypoints>(&dir, id, "ref_0_pose.json", false, &mut out);
    check_json::<super::InstanceMeta>(&dir, id, "meta.json", false, &mut out);
    if dir.join("ref_0_cloth_mask.png").exists() {
        check_png(&dir, id, "ref_0_cloth_mask.png", res.target, &mut out);
    }
    out
}

/// Walks the manifest and every instance directory, listing all problems.
pub fn validate_corpus(root: &Path) -> Result<ValidationReport> {
    let manifest = Manifest::load(root)?;
    let on_disk = instance_dirs(root)?;
    let mut violations = Vec::new();

    if manifest.count != manifest.index.len() || manifest.count != on_disk.len() {
        violations.push(Violation::CountMismatch {
            declared: manifest.count,
            indexed: manifest.index.len(),
            on_disk: on_disk.len(),
        });
    }
    if let Some(expected) = manifest.profile.canonical() {
        if expected != manifest.resolutions {
            violations.push(Violation::ProfileResolution {
                expected,
                declared: manifest.resolutions,
            });
        }
    }

    let mut seen = BTreeSet::new();
    for e in &manifest.index {
        if !seen.insert(e.id.as_str()) {
            violations.push(Violation::DuplicateId { id: e.id.clone() });
        }
    }
    let disk: BTreeSet<&str> = on_disk.iter().map(String::as_str).collect();
    for id in &on_disk {
        if !seen.contains(id.as_str()) {
            violations.push(Violation::UnindexedInstance { id: id.clone() });
        }
    }

    let present: Vec<_> = manifest
        .index
        .iter()
        .filter(|e| {
            let ok = disk.contains(e.id.as_str());
            if !ok {
                violations.push(Violation::MissingInstance { id: e.id.clone() });
            }
            ok
        })
        .collect();
    let res = manifest.resolutions;
    let per_instance: Vec<Vec<Violation>> = present
        .par_iter()
        .map(|e| check_instance(root, &e.id, e.clean, &res))
        .collect();
    violations.extend(per_instance.into_iter().flatten());

    Ok(ValidationReport {
        instances_checked: present.len(),
        violations,
    })
}
