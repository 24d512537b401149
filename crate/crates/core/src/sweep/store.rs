//! Results store: one immutable JSON record per grid point, written
//! atomically, plus saved model checkpoints. Existing records make reruns
//! skip retraining.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{Ablation, GridPoint, SweepRecord};

pub struct ResultsStore {
    dir: PathBuf,
}

impl ResultsStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(dir.join("records"))?;
        std::fs::create_dir_all(dir.join("models"))?;
        Ok(ResultsStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record_name(point: &GridPoint, ablation: Ablation) -> String {
        let arm = match ablation {
            Ablation::Subtraction => "sub",
            Ablation::NoSubtraction => "nosub",
        };
        format!(
            "{arm}_L{}_p{}_r{}",
            point.hidden_layers, point.feature_dim, point.repeat
        )
    }

    pub fn record_path(&self, point: &GridPoint, ablation: Ablation) -> PathBuf {
        self.dir
            .join("records")
            .join(format!("{}.json", Self::record_name(point, ablation)))
    }

    pub fn model_path(&self, point: &GridPoint, ablation: Ablation) -> PathBuf {
        self.dir
            .join("models")
            .join(format!("{}.svae", Self::record_name(point, ablation)))
    }

    pub fn has(&self, point: &GridPoint, ablation: Ablation) -> bool {
        self.record_path(point, ablation).exists()
    }

    pub fn write(&self, record: &SweepRecord) -> Result<()> {
        let json = serde_json::to_vec_pretty(record)
            .map_err(|e| Error::Sweep(format!("serialize record: {e}")))?;
        crate::util::atomic_write(&self.record_path(&record.point, record.ablation), &json)
    }

    pub fn read(&self, point: &GridPoint, ablation: Ablation) -> Result<SweepRecord> {
        let path = self.record_path(point, ablation);
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("record {}: {e}", path.display())))
    }

    /// Every record in the store, sorted by (ablation, L, p, repeat) so
    /// aggregation order never depends on directory iteration order.
    pub fn read_all(&self) -> Result<Vec<SweepRecord>> {
        let mut records = Vec::new();
        for entry in std::fs::read_dir(self.dir.join("records"))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let record: SweepRecord = serde_json::from_str(&text)
                .map_err(|e| Error::Format(format!("record {}: {e}", path.display())))?;
            records.push(record);
        }
        records.sort_by_key(|r| {
            (
                r.ablation as u8,
                r.point.hidden_layers,
                r.point.feature_dim,
                r.point.repeat,
            )
        });
        Ok(records)
    }
}
