use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Manifest, MaskLabel};
use crate::detector::ArtifactClass;
use crate::error::Result;
use crate::parsing::BodyRegionLabel;

/// Placement and class histograms over every mask in a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub instances: usize,
    pub masks: usize,
    pub regions: BTreeMap<BodyRegionLabel, usize>,
    pub classes: BTreeMap<ArtifactClass, usize>,
}

impl Default for CorpusStats {
    fn default() -> Self {
        Self {
            instances: 0,
            masks: 0,
            regions: BodyRegionLabel::ALL.iter().map(|&r| (r, 0)).collect(),
            classes: ArtifactClass::ALL.iter().map(|&c| (c, 0)).collect(),
        }
    }
}

impl CorpusStats {
    pub fn add(&mut self, label: MaskLabel) {
        self.masks += 1;
        *self.regions.entry(label.region).or_default() += 1;
        *self.classes.entry(label.class).or_default() += 1;
    }
}

/// Counts mask labels of every indexed instance present on disk.
pub fn corpus_stats(root: &Path) -> Result<CorpusStats> {
    let manifest = Manifest::load(root)?;
    let mut stats = CorpusStats::default();
    for e in &manifest.index {
        let dir = root.join(&e.id);
        if !dir.is_dir() {
            continue;
        }
        stats.instances += 1;
        let mut n = 0;
        while dir.join(format!("mask_{n}.png")).exists() {
            let label: MaskLabel = crate::fsutil::read_json(&dir.join(format!("mask_{n}.json")))?;
            stats.add(label);
            n += 1;
        }
    }
    Ok(stats)
}
