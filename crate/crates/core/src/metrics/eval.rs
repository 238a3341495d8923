//! Before/after evaluation over a corpus.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{detection_score, mask_iou, ssim, DetectionScore};
use crate::config::PipelineConfig;
use crate::datasets::{corpus_refs, instance_dirs, InstanceRef};
use crate::detector::ArtifactClass;
use crate::error::Result;
use crate::fsutil::{write_atomic, write_json};
use crate::image::{BinaryMask, RasterImage};
use crate::orchestrator::batch::{run_parallel, BackendPool};
use crate::orchestrator::{BackendChoice, Collaborators};

pub const CSV_HEADER: &str = "id,ssim_before,ssim_after,det_iou,p_color,r_color,p_deform,r_deform,p_cloth,r_cloth";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Minimum IoU for a detection to match a ground-truth mask.
    pub iou_thresh: f64,
    pub jobs: usize,
    /// Recorded verbatim in the report metadata; left unset by default so
    /// that reports are reproducible byte for byte.
    pub timestamp: Option<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_thresh: 0.3,
            jobs: 1,
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetadata {
    pub config_hash: String,
    pub corpus: String,
    pub backend: String,
    pub iou_thresh: f64,
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    /// Ground-truth classes present in the instance.
    pub truth_classes: Vec<ArtifactClass>,
    pub ssim_before: f64,
    pub ssim_after: f64,
    /// IoU between the union of detected masks and the ground-truth union.
    pub det_iou: f64,
    pub p_color: f64,
    pub r_color: f64,
    pub p_deform: f64,
    pub r_deform: f64,
    pub p_cloth: f64,
    pub r_cloth: f64,
    /// Reserved for runs with a perceptual-metric backend.
    pub lpips: Option<f64>,
    pub detection: DetectionScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: ArtifactClass,
    pub predicted: usize,
    pub truth: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalAggregate {
    pub instances: usize,
    pub mean_ssim_before: Option<f64>,
    pub mean_ssim_after: Option<f64>,
    pub mean_det_iou: Option<f64>,
    /// Mean IoU over matched detection pairs across the corpus.
    pub mean_matched_iou: Option<f64>,
    pub classes: Vec<ClassSummary>,
    pub lpips: Option<f64>,
    pub fid: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: EvalMetadata,
    pub rows: Vec<EvalRow>,
    pub failures: Vec<EvalFailure>,
    pub aggregate: EvalAggregate,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Pixels where `a` and `b` differ outside `mask`.
fn changed_outside(a: &RasterImage, b: &RasterImage, mask: &BinaryMask) -> usize {
    let (w, h) = a.dims();
    let mut n = 0;
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) && a.get(x, y) != b.get(x, y) {
                n += 1;
            }
        }
    }
    n
}

fn eval_instance(
    item: &InstanceRef,
    cfg: &PipelineConfig,
    pool: &BackendPool,
    collab: Collaborators<'_>,
    iou_thresh: f64,
) -> Result<std::result::Result<EvalRow, String>> {
    let (instance, _) = item.load()?;
    let id = &item.id;
    let target = instance.target_at_output()?;
    let result = pool.repair(&instance, &target, cfg, collab)?;

    let union = result.union_mask();
    let changed = changed_outside(&instance.distorted, &result.repaired, &union);
    if changed > 0 {
        return Ok(Err(format!("{changed} pixel(s) changed outside the inpainting mask")));
    }

    let predicted: Vec<_> = result.reports.iter().map(|r| (r.mask.clone(), r.class)).collect();
    let truth = instance.truth();
    let detection = detection_score(&predicted, &truth, iou_thresh)?;
    let (w, h) = instance.dims();
    let mut detected = BinaryMask::new(w, h);
    for (m, _) in &predicted {
        detected.union_with(m);
    }
    let pr = |c: ArtifactClass| {
        let s = detection.class(c);
        (s.precision(), s.recall())
    };
    let (p_color, r_color) = pr(ArtifactClass::ColorTexture);
    let (p_deform, r_deform) = pr(ArtifactClass::Deformation);
    let (p_cloth, r_cloth) = pr(ArtifactClass::ClothDesign);
    let mut truth_classes: Vec<_> = truth.iter().map(|t| t.1).collect();
    truth_classes.sort();
    truth_classes.dedup();
    Ok(Ok(EvalRow {
        id: id.to_string(),
        truth_classes,
        ssim_before: ssim(&instance.distorted, &target)?,
        ssim_after: ssim(&result.repaired, &target)?,
        det_iou: mask_iou(&detected, &instance.truth_union())?,
        p_color,
        r_color,
        p_deform,
        r_deform,
        p_cloth,
        r_cloth,
        lpips: None,
        detection,
    }))
}

/// A directory without a manifest is accepted only when it holds no
/// instances, so an empty corpus evaluates to an empty report.
fn corpus(root: &Path) -> Result<(String, Vec<InstanceRef>)> {
    if !root.join("manifest.json").exists() && instance_dirs(root)?.is_empty() {
        let name = root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok((name, Vec::new()));
    }
    let (m, refs) = corpus_refs(root)?;
    Ok((m.name, refs))
}

/// Evaluates every instance of the corpus at `root`: SSIM to the target
/// before and after repair, detection precision/recall against the
/// ground-truth masks, and an outside-mask preservation audit. Instance
/// failures are collected and the run continues.
pub fn eval_run(
    root: &Path,
    cfg: &PipelineConfig,
    choice: &BackendChoice,
    collab: Collaborators<'_>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let (corpus, items) = corpus(root)?;
    let pool = BackendPool::new(choice, cfg);
    let outcomes = run_parallel(&items, opts.jobs, |item| {
        match eval_instance(item, cfg, &pool, collab, opts.iou_thresh) {
            Ok(r) => r,
            Err(e) => Err(e.to_string()),
        }
    })?;

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (item, outcome) in items.iter().zip(outcomes) {
        let id = &item.id;
        match outcome {
            Ok(row) => rows.push(row),
            Err(error) => {
                log::error!("{id}: {error}");
                failures.push(EvalFailure { id: id.clone(), error });
            }
        }
    }

    let mut total = DetectionScore::default();
    for r in &rows {
        total.merge(&r.detection);
    }
    let classes = ArtifactClass::ALL
        .iter()
        .map(|&c| {
            let s = total.class(c);
            ClassSummary {
                class: c,
                predicted: s.predicted,
                truth: s.truth,
                matched: s.matched,
                precision: s.precision(),
                recall: s.recall(),
            }
        })
        .collect();
    let aggregate = EvalAggregate {
        instances: rows.len(),
        mean_ssim_before: mean(rows.iter().map(|r| r.ssim_before)),
        mean_ssim_after: mean(rows.iter().map(|r| r.ssim_after)),
        mean_det_iou: mean(rows.iter().map(|r| r.det_iou)),
        mean_matched_iou: total.mean_iou(),
        classes,
        lpips: None,
        fid: None,
    };
    Ok(EvalReport {
        metadata: EvalMetadata {
            config_hash: cfg.hash()?,
            corpus,
            backend: choice.to_string(),
            iou_thresh: opts.iou_thresh,
            timestamp: opts.timestamp.clone(),
        },
        rows,
        failures,
        aggregate,
    })
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.id, r.ssim_before, r.ssim_after, r.det_iou, r.p_color, r.r_color, r.p_deform, r.r_deform, r.p_cloth, r.r_cloth
            );
        }
        out
    }

    /// Two-column TSV files, one per chart, keyed by file name.
    pub fn plot_data(&self) -> Vec<(&'static str, String)> {
        let mut scatter = String::from("ssim_before\tssim_after\n");
        for r in &self.rows {
            let _ = writeln!(scatter, "{:.6}\t{:.6}", r.ssim_before, r.ssim_after);
        }
        let mut precision = String::from("class\tprecision\n");
        let mut recall = String::from("class\trecall\n");
        for c in &self.aggregate.classes {
            let _ = writeln!(precision, "{}\t{:.6}", c.class.as_str(), c.precision);
            let _ = writeln!(recall, "{}\t{:.6}", c.class.as_str(), c.recall);
        }
        let mut iou = String::from("id\tdet_iou\n");
        for r in &self.rows {
            let _ = writeln!(iou, "{}\t{:.6}", r.id, r.det_iou);
        }
        vec![
            ("ssim_before_after.tsv", scatter),
            ("precision_by_class.tsv", precision),
            ("recall_by_class.tsv", recall),
            ("det_iou_by_instance.tsv", iou),
        ]
    }

    /// Writes `eval.csv`, `eval.json` and `plots/*.tsv` into `out`, each
    /// file atomically.
    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out.join("plots"))?;
        write_atomic(&out.join("eval.csv"), self.to_csv().as_bytes())?;
        write_json(&out.join("eval.json"), self)?;
        for (name, body) in self.plot_data() {
            write_atomic(&out.join("plots").join(name), body.as_bytes())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::FixedCaptioner;

    #[test]
    fn empty_corpus_gives_empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let cap = FixedCaptioner("x".into());
        let collab = Collaborators {
            captioner: &cap,
            scale_model: None,
        };
        let report = eval_run(
            dir.path(),
            &PipelineConfig::default(),
            &BackendChoice::MockOracle,
            collab,
            &EvalOptions::default(),
        )
        .unwrap();
        assert!(report.rows.is_empty() && report.failures.is_empty());
        assert_eq!(report.aggregate.mean_ssim_before, None);
        assert_eq!(report.to_csv(), format!("{CSV_HEADER}\n"));
        let out = dir.path().join("out");
        report.write(&out).unwrap();
        let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("eval.json")).unwrap()).unwrap();
        assert!(json["aggregate"]["fid"].is_null());
        assert!(json["metadata"]["timestamp"].is_null());
    }

    #[test]
    fn outside_change_counter() {
        let a = RasterImage::filled(4, 4, [1, 2, 3]);
        let mut b = a.clone();
        b.set(0, 0, [9, 9, 9]);
        b.set(3, 3, [9, 9, 9]);
        let mut m = BinaryMask::new(4, 4);
        m.set(0, 0, true);
        assert_eq!(changed_outside(&a, &b, &m), 1);
    }
}
