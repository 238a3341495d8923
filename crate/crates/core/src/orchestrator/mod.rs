//! End-to-end repair: detect, build conditions, inpaint through a backend,
//! composite, and pick a candidate.

mod audit;
mod backend;
pub(crate) mod batch;
mod http;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use audit::{AuditEntry, AuditLog};
pub use backend::{blur_fill, Backend, BackendError, InpaintRequest, InpaintResponse, MockBackend, MockMode, Throttled};
pub use batch::{batch_repair, write_instance_repair, BatchItem, BatchOutcome, BatchSummary};
pub use http::{
    decode_image_field, decode_response, encode_request, ErrorReply, HealthReply, HttpBackend, InpaintPayload, InpaintReply,
};

use crate::conditioning::{build_bundle, Captioner, ConditionBundle, ScaleModel};
use crate::config::PipelineConfig;
use crate::detector::{detect, ArtifactReport, DetectionOutcome, DetectorInputs, ReportSummary};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, RasterImage};
use crate::metrics::ssim;
use crate::vision::distance_transform;

/// Blends `generated` into `original` inside `mask`. Blend weight grows
/// from the mask boundary inward over `feather + 1` pixels; pixels outside
/// the mask are copied bit-exactly.
pub fn composite(original: &RasterImage, generated: &RasterImage, mask: &BinaryMask, feather: usize) -> Result<RasterImage> {
    if original.dims() != generated.dims() {
        return Err(Error::dims(original.dims(), generated.dims()));
    }
    if original.dims() != mask.dims() {
        return Err(Error::dims(original.dims(), mask.dims()));
    }
    let (w, h) = original.dims();
    let outside = BinaryMask::from_fn(w, h, |x, y| !mask.get(x, y));
    let dist = distance_transform(&outside);
    let band = (feather + 1) as f64;
    let mut out = original.clone();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let alpha = (dist[y * w + x] / band).min(1.0);
            if alpha >= 1.0 {
                out.set(x, y, generated.get(x, y));
            } else {
                let (o, g) = (original.get(x, y), generated.get(x, y));
                let px = [0, 1, 2].map(|c| (alpha * g[c] as f64 + (1.0 - alpha) * o[c] as f64).round() as u8);
                out.set(x, y, px);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairConfig {
    /// One inpainting call per seed.
    pub seeds: Vec<u64>,
    /// Width (px) of the inward blend band.
    pub feather: usize,
    /// Blur sigma of the mock blur-fill backend.
    pub blur_sigma: f64,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            seeds: vec![8, 11],
            feather: 3,
            blur_sigma: 2.0,
        }
    }
}

impl RepairConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("repair.seeds must not be empty".into()));
        }
        if self.feather > 64 {
            return Err(Error::Config("repair.feather must be at most 64".into()));
        }
        if !(0.0..=50.0).contains(&self.blur_sigma) {
            return Err(Error::Config("repair.blur_sigma must be in [0, 50]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    /// Extra attempts after a transport failure.
    pub retries: u32,
    /// First retry delay; doubles on every further retry.
    pub backoff_ms: u64,
    /// Cap on concurrent requests across workers.
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:7860".into(),
            timeout_ms: 120_000,
            retries: 2,
            backoff_ms: 500,
            max_in_flight: 2,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(Error::Config("backend.endpoint must be an http(s) URL".into()));
        }
        if self.timeout_ms == 0 {
            return Err(Error::Config("backend.timeout_ms must be positive".into()));
        }
        if self.retries > 10 {
            return Err(Error::Config("backend.retries must be at most 10".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("backend.max_in_flight must be positive".into()));
        }
        Ok(())
    }

    pub fn client(&self, endpoint: Option<&str>) -> HttpBackend {
        HttpBackend::new(
            endpoint.unwrap_or(&self.endpoint),
            Duration::from_millis(self.timeout_ms),
            self.retries,
            Duration::from_millis(self.backoff_ms),
        )
    }
}

/// Backend selector as written on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendChoice {
    MockOracle,
    MockBlur,
    Http(String),
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mock:oracle" => Ok(BackendChoice::MockOracle),
            "mock:blur" => Ok(BackendChoice::MockBlur),
            _ => match s.strip_prefix("http:") {
                Some(rest) if rest.starts_with("//") => Ok(BackendChoice::Http(format!("http:{rest}"))),
                Some(rest) if !rest.is_empty() => Ok(BackendChoice::Http(rest.to_string())),
                _ => Err(format!("unknown backend {s:?}; expected mock:oracle, mock:blur or http:<url>")),
            },
        }
    }
}

impl fmt::Display for BackendChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendChoice::MockOracle => write!(f, "mock:oracle"),
            BackendChoice::MockBlur => write!(f, "mock:blur"),
            BackendChoice::Http(url) if url.starts_with("http") => write!(f, "{url}"),
            BackendChoice::Http(url) => write!(f, "http:{url}"),
        }
    }
}

/// Optional pipeline collaborators.
#[derive(Clone, Copy)]
pub struct Collaborators<'a> {
    pub captioner: &'a dyn Captioner,
    pub scale_model: Option<&'a dyn ScaleModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub seed: u64,
    pub image: RasterImage,
    pub backend: String,
    /// Similarity to the target, when one is available.
    pub ssim: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RepairResult {
    pub repaired: RasterImage,
    pub reports: Vec<ArtifactReport>,
    pub skipped: Vec<String>,
    pub bundle: Option<ConditionBundle>,
    pub candidates: Vec<Candidate>,
    pub chosen_seed: Option<u64>,
    pub audit: AuditLog,
}

impl RepairResult {
    pub fn union_mask(&self) -> BinaryMask {
        let (w, h) = self.repaired.dims();
        crate::conditioning::union_inpaint_mask(&self.reports, (w, h))
    }
}

/// Runs the full pipeline on one image. With `target` (evaluation mode) the
/// candidate closest to it by SSIM is kept; otherwise the first seed's.
pub fn repair(
    inputs: &DetectorInputs,
    target: Option<&RasterImage>,
    cfg: &PipelineConfig,
    backend: &dyn Backend,
    collab: Collaborators<'_>,
) -> Result<RepairResult> {
    let mut audit = AuditLog::default();
    let start = Instant::now();
    let DetectionOutcome { reports, skipped, .. } = detect(inputs, &cfg.detector)?;
    audit.record_timed("detect", format!("{} artifact(s)", reports.len()), start);
    for s in &skipped {
        audit.record("detect.skip", s.clone());
    }
    if reports.is_empty() {
        audit.record("repair.skip", "no artifacts; image returned unchanged");
        return Ok(RepairResult {
            repaired: inputs.distorted.clone(),
            reports,
            skipped,
            bundle: None,
            candidates: Vec::new(),
            chosen_seed: None,
            audit,
        });
    }

    let start = Instant::now();
    let bundle = build_bundle(
        inputs,
        &reports,
        &cfg.detector,
        &cfg.conditioning,
        &cfg.repair.seeds,
        collab.captioner,
        collab.scale_model,
    )?;
    audit.record_timed(
        "conditioning",
        format!("region {} scales {:?} flags {:?}", bundle.region.label.as_str(), bundle.scales.components(), bundle.flags),
        start,
    );

    let mut candidates = Vec::with_capacity(bundle.seeds.len());
    for &seed in &bundle.seeds {
        let request = InpaintRequest {
            image: &inputs.distorted,
            bundle: &bundle,
            seed,
        };
        let start = Instant::now();
        let response = backend.inpaint(&request, &mut audit)?;
        request.check_response(&response.image)?;
        let image = composite(&inputs.distorted, &response.image, &bundle.mask, cfg.repair.feather)?;
        let score = target.map(|t| ssim(&image, t)).transpose()?;
        audit.record_timed("inpaint", format!("seed {seed} via {}", response.backend), start);
        candidates.push(Candidate {
            seed,
            image,
            backend: response.backend,
            ssim: score,
        });
    }

    let chosen = match target {
        Some(_) => candidates
            .iter()
            .enumerate()
            .max_by(|a, b| {
                let (sa, sb) = (a.1.ssim.unwrap_or(f64::MIN), b.1.ssim.unwrap_or(f64::MIN));
                sa.total_cmp(&sb).then(b.0.cmp(&a.0))
            })
            .map(|(i, _)| i)
            .unwrap_or(0),
        None => 0,
    };
    audit.record("select", format!("seed {}", candidates[chosen].seed));
    Ok(RepairResult {
        repaired: candidates[chosen].image.clone(),
        chosen_seed: Some(candidates[chosen].seed),
        reports,
        skipped,
        bundle: Some(bundle),
        candidates,
        audit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub reports: Vec<ReportSummary>,
    pub skipped: Vec<String>,
}

/// Writes report masks (`artifact_<i>.png`, `artifact_<i>_inpaint.png`)
/// and `report.json` into `dir`.
pub fn write_detection(dir: &Path, reports: &[ArtifactReport], skipped: &[String]) -> Result<()> {
    let mut summaries = Vec::with_capacity(reports.len());
    for (i, r) in reports.iter().enumerate() {
        let s = r.summary(i);
        r.mask.save_png(&dir.join(&s.mask_file))?;
        r.inpaint_mask.save_png(&dir.join(&s.inpaint_mask_file))?;
        summaries.push(s);
    }
    crate::fsutil::write_json(
        &dir.join("report.json"),
        &DetectionFile {
            reports: summaries,
            skipped: skipped.to_vec(),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub seed: u64,
    pub backend: String,
    pub ssim: Option<f64>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairFile {
    pub chosen_seed: Option<u64>,
    pub candidates: Vec<CandidateSummary>,
    pub audit: AuditLog,
}

/// Writes `repaired.png`, the detection report, candidates, the condition
/// bundle (under `bundle/`) and `repair.json` into `dir`.
pub fn write_repair(dir: &Path, result: &RepairResult) -> Result<()> {
    result.repaired.save_png(&dir.join("repaired.png"))?;
    write_detection(dir, &result.reports, &result.skipped)?;
    let mut candidates = Vec::new();
    for c in &result.candidates {
        let file = format!("candidate_seed{}.png", c.seed);
        c.image.save_png(&dir.join(&file))?;
        candidates.push(CandidateSummary {
            seed: c.seed,
            backend: c.backend.clone(),
            ssim: c.ssim,
            file,
        });
    }
    if let Some(b) = &result.bundle {
        b.save(&dir.join("bundle"))?;
    }
    crate::fsutil::write_json(
        &dir.join("repair.json"),
        &RepairFile {
            chosen_seed: result.chosen_seed,
            candidates,
            audit: result.audit.clone(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize, base: u8) -> RasterImage {
        let mut img = RasterImage::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, [base.wrapping_add((x * 7) as u8), (y * 5) as u8, base]);
            }
        }
        img
    }

    #[test]
    fn composite_cases() {
        let a = gradient(16, 10, 3);
        let b = gradient(16, 10, 200);
        assert_eq!(composite(&a, &b, &BinaryMask::new(16, 10), 3).unwrap(), a);
        assert_eq!(composite(&a, &b, &BinaryMask::full(16, 10), 0).unwrap(), b);
        assert_eq!(composite(&a, &b, &BinaryMask::full(16, 10), 5).unwrap(), b);

        let half = BinaryMask::from_fn(16, 10, |x, _| x >= 8);
        let c = composite(&a, &b, &half, 0).unwrap();
        for y in 0..10 {
            for x in 0..16 {
                let expect = if x >= 8 { b.get(x, y) } else { a.get(x, y) };
                assert_eq!(c.get(x, y), expect, "({x},{y})");
            }
        }
        assert!(composite(&a, &gradient(8, 8, 0), &half, 0).is_err());
    }

    #[test]
    fn composite_feather_band_is_inside_mask() {
        let a = RasterImage::filled(20, 20, [0, 0, 0]);
        let b = RasterImage::filled(20, 20, [200, 200, 200]);
        let mask = BinaryMask::from_fn(20, 20, |x, y| (5..15).contains(&x) && (5..15).contains(&y));
        let c = composite(&a, &b, &mask, 3).unwrap();
        assert_eq!(c.get(4, 10), [0, 0, 0]);
        assert_eq!(c.get(5, 10), [50, 50, 50]);
        assert_eq!(c.get(6, 10), [100, 100, 100]);
        assert_eq!(c.get(9, 10), [200, 200, 200]);
    }

    #[test]
    fn backend_choice_parsing() {
        assert_eq!("mock:oracle".parse(), Ok(BackendChoice::MockOracle));
        assert_eq!("mock:blur".parse(), Ok(BackendChoice::MockBlur));
        assert_eq!(
            "http://localhost:9/x".parse(),
            Ok(BackendChoice::Http("http://localhost:9/x".into()))
        );
        assert!("mock:foo".parse::<BackendChoice>().is_err());
        assert_eq!(BackendChoice::MockBlur.to_string(), "mock:blur");
    }
}
