//! Sentence embeddings and style-difference vectors.
//!
//! Embeddings come from a remote HTTP service ([`remote`]) or a seeded
//! synthetic generator ([`synthetic`]); both are cached/stored as
//! little-endian f32 with a 16-byte header (see [`vecfile`]). Difference
//! vectors are built by parallel-sentence subtraction: for each verse,
//! reference embedding minus target embedding.

pub mod cache;
pub mod remote;
pub mod synthetic;
pub mod vecfile;

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelCorpus, VerseRef};
use crate::error::{Error, Result};

/// One sentence embedding (f64 internally; stored artifacts are f32).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite embedding component at index {i}"
            )));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(EmbeddingVector { values, norm })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| v as f64).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Cached Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

/// Style-difference vector for one verse: reference minus target embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffVector {
    pub values: Vec<f64>,
    pub source_ref: VerseRef,
    /// (reference version, target version).
    pub pair: (String, String),
}

/// Embeddings for a corpus: per version, one vector per verse in corpus
/// order.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub d: usize,
    pub model_id: String,
    refs: Vec<VerseRef>,
    ref_index: HashMap<VerseRef, usize>,
    versions: HashMap<String, Vec<EmbeddingVector>>,
}

impl EmbeddingSet {
    pub fn new(corpus: &ParallelCorpus, d: usize, model_id: impl Into<String>) -> Self {
        let refs: Vec<VerseRef> = corpus.verses.iter().map(|v| v.verse_ref.clone()).collect();
        let ref_index = refs
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();
        EmbeddingSet {
            d,
            model_id: model_id.into(),
            refs,
            ref_index,
            versions: HashMap::new(),
        }
    }

    pub fn insert_version(&mut self, version: &str, vectors: Vec<EmbeddingVector>) -> Result<()> {
        if vectors.len() != self.refs.len() {
            return Err(Error::Coverage(format!(
                "version `{version}`: {} vectors for {} verses",
                vectors.len(),
                self.refs.len()
            )));
        }
        if let Some(v) = vectors.iter().find(|v| v.dim() != self.d) {
            return Err(Error::Contract(format!(
                "version `{version}`: vector of dim {} where d = {}",
                v.dim(),
                self.d
            )));
        }
        self.versions.insert(version.to_string(), vectors);
        Ok(())
    }

    pub fn versions(&self) -> impl Iterator<Item = &String> {
        self.versions.keys()
    }

    pub fn has_version(&self, version: &str) -> bool {
        self.versions.contains_key(version)
    }

    pub fn get(&self, version: &str, r: &VerseRef) -> Option<&EmbeddingVector> {
        let idx = *self.ref_index.get(r)?;
        self.versions.get(version)?.get(idx)
    }

    pub fn version_vectors(&self, version: &str) -> Option<&[EmbeddingVector]> {
        self.versions.get(version).map(|v| v.as_slice())
    }

    /// Raw embeddings of one version as a (verses, d) matrix — the
    /// no-subtraction ablation's training input.
    pub fn version_matrix(&self, version: &str) -> Result<Array2<f64>> {
        let vecs = self
            .versions
            .get(version)
            .ok_or_else(|| Error::Coverage(format!("no embeddings for version `{version}`")))?;
        let mut m = Array2::zeros((vecs.len(), self.d));
        for (i, v) in vecs.iter().enumerate() {
            for (j, &x) in v.values().iter().enumerate() {
                m[[i, j]] = x;
            }
        }
        Ok(m)
    }

    /// Persist as one `.vec` file per version plus a manifest.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        let mut ids: Vec<&String> = self.versions.keys().collect();
        ids.sort();
        for id in ids {
            let file = format!("{}.vec", sanitize_id(id));
            let vectors = &self.versions[id];
            let rows: Vec<Vec<f32>> = vectors.iter().map(|v| v.to_f32()).collect();
            vecfile::write_vectors(&dir.join(&file), self.d, &rows)?;
            entries.push(serde_json::json!({ "id": id, "file": file }));
        }
        let manifest = serde_json::json!({
            "model_id": self.model_id,
            "d": self.d,
            "count": self.refs.len(),
            "versions": entries,
        });
        crate::util::atomic_write(&dir.join("manifest.json"), manifest.to_string().as_bytes())
    }

    /// Load a directory written by [`EmbeddingSet::save_dir`]; verse order
    /// comes from `corpus`, whose length must match.
    pub fn load_dir(dir: &Path, corpus: &ParallelCorpus) -> Result<EmbeddingSet> {
        #[derive(Deserialize)]
        struct Entry {
            id: String,
            file: String,
        }
        #[derive(Deserialize)]
        struct Manifest {
            model_id: String,
            d: usize,
            count: usize,
            versions: Vec<Entry>,
        }
        let text = std::fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if manifest.count != corpus.len() {
            return Err(Error::Data(format!(
                "embedding set holds {} verses, corpus has {}",
                manifest.count,
                corpus.len()
            )));
        }
        let mut set = EmbeddingSet::new(corpus, manifest.d, manifest.model_id);
        for entry in manifest.versions {
            let (d, rows) = vecfile::read_vectors(&dir.join(&entry.file))?;
            if d != manifest.d {
                return Err(Error::Format(format!(
                    "{}: dim {} does not match manifest d {}",
                    entry.file, d, manifest.d
                )));
            }
            let vectors: Result<Vec<EmbeddingVector>> =
                rows.iter().map(|r| EmbeddingVector::from_f32(r)).collect();
            set.insert_version(&entry.id, vectors?)?;
        }
        Ok(set)
    }
}

pub(crate) fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Per-verse difference vectors `reference − target`, aligned with corpus
/// verse order.
pub fn make_diffs(
    corpus: &ParallelCorpus,
    embeddings: &EmbeddingSet,
    reference: &str,
    target: &str,
) -> Result<Vec<DiffVector>> {
    let mut out = Vec::with_capacity(corpus.len());
    for verse in &corpus.verses {
        let r = &verse.verse_ref;
        let k = embeddings.get(reference, r).ok_or_else(|| {
            Error::Coverage(format!("no embedding for `{reference}` at {r}"))
        })?;
        let t = embeddings
            .get(target, r)
            .ok_or_else(|| Error::Coverage(format!("no embedding for `{target}` at {r}")))?;
        let values: Vec<f64> = k
            .values()
            .iter()
            .zip(t.values())
            .map(|(a, b)| a - b)
            .collect();
        out.push(DiffVector {
            values,
            source_ref: r.clone(),
            pair: (reference.to_string(), target.to_string()),
        });
    }
    Ok(out)
}

/// Range policy for inputs to the bounded-output autoencoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangePolicy {
    /// Error if any |component| exceeds 1.
    Assert,
    /// Divide every vector by the global max-abs component when it exceeds 1.
    Scale,
}

/// Enforce the representable input range (decoder outputs lie in (-1, 1)).
/// Returns the vectors and the scale factor actually applied (1.0 when no
/// scaling occurred); the factor is recorded in model metadata.
pub fn range_check_and_scale(
    mut diffs: Vec<DiffVector>,
    policy: RangePolicy,
) -> Result<(Vec<DiffVector>, f64)> {
    if diffs.is_empty() {
        return Err(Error::Contract("range check: empty vector list".into()));
    }
    let mut max_abs = 0.0f64;
    for d in &diffs {
        for &v in &d.values {
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite component in diff at {}",
                    d.source_ref
                )));
            }
            max_abs = max_abs.max(v.abs());
        }
    }
    match policy {
        RangePolicy::Assert => {
            if max_abs > 1.0 {
                return Err(Error::Data(format!(
                    "component magnitude {max_abs} exceeds 1 under assert policy"
                )));
            }
            Ok((diffs, 1.0))
        }
        RangePolicy::Scale => {
            if max_abs > 1.0 {
                for d in diffs.iter_mut() {
                    for v in d.values.iter_mut() {
                        *v /= max_abs;
                    }
                }
                Ok((diffs, max_abs))
            } else {
                Ok((diffs, 1.0))
            }
        }
    }
}

/// Matrix variant of [`range_check_and_scale`] used on raw-embedding inputs.
pub fn range_check_and_scale_matrix(m: &mut Array2<f64>, policy: RangePolicy) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::Contract("range check: empty matrix".into()));
    }
    let mut max_abs = 0.0f64;
    for &v in m.iter() {
        if !v.is_finite() {
            return Err(Error::Data("non-finite component in input matrix".into()));
        }
        max_abs = max_abs.max(v.abs());
    }
    match policy {
        RangePolicy::Assert => {
            if max_abs > 1.0 {
                return Err(Error::Data(format!(
                    "component magnitude {max_abs} exceeds 1 under assert policy"
                )));
            }
            Ok(1.0)
        }
        RangePolicy::Scale => {
            if max_abs > 1.0 {
                m.mapv_inplace(|v| v / max_abs);
                Ok(max_abs)
            } else {
                Ok(1.0)
            }
        }
    }
}

/// Stack difference vectors into a (samples, d) matrix.
pub fn diffs_to_matrix(diffs: &[DiffVector], d: usize) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((diffs.len(), d));
    for (i, diff) in diffs.iter().enumerate() {
        if diff.values.len() != d {
            return Err(Error::Contract(format!(
                "diff at {} has width {}, expected {d}",
                diff.source_ref,
                diff.values.len()
            )));
        }
        for (j, &v) in diff.values.iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok(m)
}
