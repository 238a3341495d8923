use std::time::Instant;

use serde::{Deserialize, Serialize};

/// One pipeline event. `elapsed_ms` is kept in memory for diagnostics but
/// never serialized, so persisted logs stay reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub stage: String,
    pub detail: String,
    #[serde(skip)]
    pub elapsed_ms: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuditLog {
    pub entries: Vec<AuditEntry>,
}

impl AuditLog {
    pub fn record(&mut self, stage: &str, detail: impl Into<String>) {
        let detail = detail.into();
        log::debug!("{stage}: {detail}");
        self.entries.push(AuditEntry {
            stage: stage.to_string(),
            detail,
            elapsed_ms: None,
        });
    }

    pub fn record_timed(&mut self, stage: &str, detail: impl Into<String>, since: Instant) {
        let ms = since.elapsed().as_millis() as u64;
        self.record(stage, detail);
        if let Some(last) = self.entries.last_mut() {
            last.elapsed_ms = Some(ms);
        }
    }

    pub fn count(&self, stage: &str) -> usize {
        self.entries.iter().filter(|e| e.stage == stage).count()
    }
}
