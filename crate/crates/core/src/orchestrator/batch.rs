use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backend::{Backend, MockBackend, Throttled};
use super::http::HttpBackend;
use super::{repair, write_repair, BackendChoice, Collaborators, RepairResult};
use crate::config::PipelineConfig;
use crate::datasets::{DatasetInstance, InstanceRef};
use crate::error::{Error, Result};
use crate::image::RasterImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BatchOutcome {
    Repaired { reports: usize, chosen_seed: u64 },
    /// No artifacts found; output equals input.
    Skipped,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub id: String,
    #[serde(flatten)]
    pub outcome: BatchOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub succeeded: usize,
    pub skipped: usize,
    pub failed: usize,
    pub items: Vec<BatchItem>,
}

impl BatchSummary {
    pub fn from_items(items: Vec<BatchItem>) -> Self {
        let mut s = BatchSummary::default();
        for i in &items {
            match i.outcome {
                BatchOutcome::Repaired { .. } => s.succeeded += 1,
                BatchOutcome::Skipped => s.skipped += 1,
                BatchOutcome::Failed { .. } => s.failed += 1,
            }
        }
        s.items = items;
        s
    }
}

/// Backend factory shared by all workers of a batch.
pub(crate) struct BackendPool {
    choice: BackendChoice,
    blur_sigma: f64,
    http: Option<Throttled<HttpBackend>>,
}

impl BackendPool {
    pub(crate) fn new(choice: &BackendChoice, cfg: &PipelineConfig) -> Self {
        let http = match choice {
            BackendChoice::Http(url) => Some(Throttled::new(cfg.backend.client(Some(url)), cfg.backend.max_in_flight)),
            _ => None,
        };
        Self {
            choice: choice.clone(),
            blur_sigma: cfg.repair.blur_sigma,
            http,
        }
    }

    /// Repairs one instance; `target` must already be at output resolution.
    pub(crate) fn repair(
        &self,
        instance: &DatasetInstance,
        target: &RasterImage,
        cfg: &PipelineConfig,
        collab: Collaborators<'_>,
    ) -> Result<RepairResult> {
        let inputs = instance.detector_inputs();
        match &self.choice {
            BackendChoice::MockOracle => {
                let b = MockBackend::oracle(target.clone());
                repair(&inputs, Some(target), cfg, &b, collab)
            }
            BackendChoice::MockBlur => {
                let b = MockBackend::blur_fill(self.blur_sigma);
                repair(&inputs, Some(target), cfg, &b, collab)
            }
            BackendChoice::Http(_) => {
                let b: &dyn Backend = self.http.as_ref().expect("built for http choice");
                repair(&inputs, Some(target), cfg, b, collab)
            }
        }
    }
}

/// Runs `f` over `items` on a pool of `jobs` threads, keeping input order.
pub(crate) fn run_parallel<I: Sync, T: Send>(items: &[I], jobs: usize, f: impl Fn(&I) -> T + Sync) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::param(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

/// Writes a repair result for the instance stored in `source`. When nothing
/// was repaired the original `distorted.png` is copied byte for byte.
pub fn write_instance_repair(dir: &Path, result: &RepairResult, source: &Path) -> Result<()> {
    write_repair(dir, result)?;
    if result.chosen_seed.is_none() {
        std::fs::copy(source.join("distorted.png"), dir.join("repaired.png"))?;
    }
    Ok(())
}

/// Repairs every listed instance, writing each result atomically to
/// `<out>/<id>/`. Failures are recorded per instance.
pub fn batch_repair(
    items: &[InstanceRef],
    cfg: &PipelineConfig,
    choice: &BackendChoice,
    collab: Collaborators<'_>,
    out: &Path,
    jobs: usize,
) -> Result<BatchSummary> {
    let pool = BackendPool::new(choice, cfg);
    let items = run_parallel(items, jobs, |item| {
        let id = &item.id;
        let result = item
            .load()
            .and_then(|(instance, _)| pool.repair(&instance, &instance.target_at_output()?, cfg, collab))
            .and_then(|r| {
                crate::fsutil::write_dir_atomic(&out.join(id), |d| write_instance_repair(d, &r, &item.dir))?;
                Ok(r)
            });
        let outcome = match result {
            Ok(r) => match r.chosen_seed {
                Some(seed) => BatchOutcome::Repaired {
                    reports: r.reports.len(),
                    chosen_seed: seed,
                },
                None => BatchOutcome::Skipped,
            },
            Err(e) => {
                log::error!("{id}: {e}");
                BatchOutcome::Failed { error: e.to_string() }
            }
        };
        BatchItem { id: id.clone(), outcome }
    })?;
    Ok(BatchSummary::from_items(items))
}
