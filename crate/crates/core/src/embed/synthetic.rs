//! Deterministic synthetic embeddings.
//!
//! Each vector decomposes as `content(verse) + style(version) + noise`:
//! the content vector is shared across versions (so parallel subtraction
//! cancels it exactly in the noise-free limit), the style vector is fixed
//! per version, and the noise is fresh Gaussian per (version, verse). All
//! three streams are derived from one seed, so a seed pins the whole set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::ParallelCorpus;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, DetRng};

use super::{EmbeddingSet, EmbeddingVector};

/// How a version's style vector is constructed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StyleRule {
    /// All-zero style (a natural choice for the reference version).
    Zero,
    /// Random direction scaled to the given norm.
    RandomNorm { norm: f64 },
    /// Anchor version's style plus a random direction of the given norm,
    /// i.e. `‖s_this − s_anchor‖ = norm` exactly. The anchor must be
    /// declared earlier in the version list.
    OffsetFrom { anchor: String, norm: f64 },
    /// Explicit style vector (must have length d).
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticVersionSpec {
    pub id: String,
    #[serde(flatten)]
    pub style: StyleRule,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    /// Per-component standard deviation of the shared content vectors.
    pub content_scale: f64,
    /// Per-component standard deviation of the fresh noise.
    pub noise_scale: f64,
    pub versions: Vec<SyntheticVersionSpec>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("synthetic spec: d must be positive".into()));
        }
        if self.noise_scale < 0.0 {
            return Err(Error::Config(format!(
                "synthetic spec: noise scale must be nonnegative, got {}",
                self.noise_scale
            )));
        }
        if self.content_scale < 0.0 {
            return Err(Error::Config(format!(
                "synthetic spec: content scale must be nonnegative, got {}",
                self.content_scale
            )));
        }
        if self.versions.is_empty() {
            return Err(Error::Config("synthetic spec: no versions declared".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SyntheticSpec =
            toml::from_str(text).map_err(|e| Error::Config(format!("synthetic spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Digest of the spec's canonical JSON encoding; part of the synthetic
    /// model id so different specs never share cache keys.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        crate::rng::sha256_hex(json.as_bytes())[..16].to_string()
    }
}

fn unit_direction(d: usize, rng: &mut DetRng) -> Vec<f64> {
    loop {
        let mut v = vec![0.0; d];
        rng.fill_standard_normal(&mut v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            return v;
        }
    }
}

/// Resolve every version's style vector. Exposed so tests can verify gap
/// construction directly.
pub fn style_vectors(spec: &SyntheticSpec, seed: u64) -> Result<BTreeMap<String, Vec<f64>>> {
    spec.validate()?;
    let mut rng = DetRng::new(derive_seed(seed, &["styles"]));
    let mut styles: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for version in &spec.versions {
        let style = match &version.style {
            StyleRule::Zero => vec![0.0; spec.d],
            StyleRule::RandomNorm { norm } => {
                let mut v = unit_direction(spec.d, &mut rng);
                for x in v.iter_mut() {
                    *x *= norm;
                }
                v
            }
            StyleRule::OffsetFrom { anchor, norm } => {
                let base = styles.get(anchor).ok_or_else(|| {
                    Error::Config(format!(
                        "synthetic spec: version `{}` anchors to undeclared `{anchor}`",
                        version.id
                    ))
                })?;
                let dir = unit_direction(spec.d, &mut rng);
                base.iter().zip(&dir).map(|(b, u)| b + u * norm).collect()
            }
            StyleRule::Explicit { values } => {
                if values.len() != spec.d {
                    return Err(Error::Config(format!(
                        "synthetic spec: explicit style for `{}` has length {}, d = {}",
                        version.id,
                        values.len(),
                        spec.d
                    )));
                }
                values.clone()
            }
        };
        if styles.insert(version.id.clone(), style).is_some() {
            return Err(Error::Config(format!(
                "synthetic spec: duplicate version `{}`",
                version.id
            )));
        }
    }
    Ok(styles)
}

/// Generate embeddings for every corpus version:
/// `vector(v, verse_i) = content_i + style_v + noise`, fully reproducible
/// from the seed.
pub fn embed_synthetic(
    corpus: &ParallelCorpus,
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<EmbeddingSet> {
    let styles = style_vectors(spec, seed)?;
    for v in &corpus.versions {
        if !styles.contains_key(v) {
            return Err(Error::Config(format!(
                "synthetic spec declares no style for corpus version `{v}`"
            )));
        }
    }

    let n = corpus.len();
    let mut contents: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut rng_content = DetRng::new(derive_seed(seed, &["content"]));
    for _ in 0..n {
        let mut c = vec![0.0; spec.d];
        rng_content.fill_standard_normal(&mut c);
        for x in c.iter_mut() {
            *x *= spec.content_scale;
        }
        contents.push(c);
    }

    let model_id = format!("synthetic-{seed}-{}", spec.digest());
    let mut set = EmbeddingSet::new(corpus, spec.d, model_id);
    for version in &corpus.versions {
        let style = &styles[version];
        let mut rng_noise = DetRng::new(derive_seed(seed, &["noise", version]));
        let mut vectors = Vec::with_capacity(n);
        for content in contents.iter() {
            let mut values = vec![0.0; spec.d];
            for (i, x) in values.iter_mut().enumerate() {
                *x = content[i] + style[i] + rng_noise.standard_normal() * spec.noise_scale;
            }
            vectors.push(EmbeddingVector::new(values)?);
        }
        set.insert_version(version, vectors)?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ParallelVerse, VerseRef};
    use crate::embed::make_diffs;

    fn corpus(n: usize, versions: &[&str]) -> ParallelCorpus {
        ParallelCorpus {
            versions: versions.iter().map(|s| s.to_string()).collect(),
            verses: (0..n)
                .map(|i| ParallelVerse {
                    verse_ref: VerseRef::new("Genesis", 1, i as u32 + 1),
                    texts: versions.iter().map(|v| format!("{v} {i}")).collect(),
                })
                .collect(),
        }
    }

    fn two_version_spec(noise: f64) -> SyntheticSpec {
        SyntheticSpec {
            d: 64,
            content_scale: 0.05,
            noise_scale: noise,
            versions: vec![
                SyntheticVersionSpec {
                    id: "A".into(),
                    style: StyleRule::RandomNorm { norm: 0.4 },
                },
                SyntheticVersionSpec {
                    id: "B".into(),
                    style: StyleRule::OffsetFrom {
                        anchor: "A".into(),
                        norm: 0.5,
                    },
                },
            ],
        }
    }

    #[test]
    fn noise_free_diffs_equal_style_gap_everywhere() {
        let c = corpus(20, &["A", "B"]);
        let spec = two_version_spec(0.0);
        let set = embed_synthetic(&c, &spec, 3).unwrap();
        let styles = style_vectors(&spec, 3).unwrap();
        let expected: Vec<f64> = styles["A"]
            .iter()
            .zip(&styles["B"])
            .map(|(a, b)| a - b)
            .collect();
        let diffs = make_diffs(&c, &set, "A", "B").unwrap();
        for d in &diffs {
            for (got, want) in d.values.iter().zip(&expected) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        let c = corpus(10, &["A", "B"]);
        let spec = two_version_spec(0.02);
        let x = embed_synthetic(&c, &spec, 7).unwrap();
        let y = embed_synthetic(&c, &spec, 7).unwrap();
        for v in &c.versions {
            for r in c.verses.iter().map(|p| &p.verse_ref) {
                let a = x.get(v, r).unwrap();
                let b = y.get(v, r).unwrap();
                for (p, q) in a.values().iter().zip(b.values()) {
                    assert_eq!(p.to_bits(), q.to_bits());
                }
            }
        }
        let z = embed_synthetic(&c, &spec, 8).unwrap();
        let r0 = &c.verses[0].verse_ref;
        assert_ne!(x.get("A", r0).unwrap(), z.get("A", r0).unwrap());
    }

    #[test]
    fn offset_rule_pins_pairwise_gap() {
        let spec = two_version_spec(0.01);
        let styles = style_vectors(&spec, 11).unwrap();
        let gap: f64 = styles["A"]
            .iter()
            .zip(&styles["B"])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!((gap - 0.5).abs() < 1e-9, "gap {gap}");
    }

    #[test]
    fn mean_diff_norm_tracks_style_gap() {
        // Monte Carlo with the generator at a seed not used elsewhere:
        // gap 0.5, noise 0.01 -> mean diff norm within [0.45, 0.55].
        let c = corpus(1000, &["A", "B"]);
        let spec = two_version_spec(0.01);
        let set = embed_synthetic(&c, &spec, 999).unwrap();
        let diffs = make_diffs(&c, &set, "A", "B").unwrap();
        let mean_norm: f64 = diffs
            .iter()
            .map(|d| d.values.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / diffs.len() as f64;
        assert!(
            (0.45..=0.55).contains(&mean_norm),
            "mean diff norm {mean_norm}"
        );
    }

    #[test]
    fn negative_noise_rejected() {
        let mut spec = two_version_spec(0.01);
        spec.noise_scale = -1.0;
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn undeclared_anchor_rejected() {
        let spec = SyntheticSpec {
            d: 4,
            content_scale: 0.0,
            noise_scale: 0.0,
            versions: vec![SyntheticVersionSpec {
                id: "B".into(),
                style: StyleRule::OffsetFrom {
                    anchor: "missing".into(),
                    norm: 1.0,
                },
            }],
        };
        assert!(style_vectors(&spec, 1).is_err());
    }
}
