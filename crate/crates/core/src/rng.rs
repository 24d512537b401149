//! Deterministic random number generation.
//!
//! All stochastic steps in the pipeline (splits, weight init, mini-batch
//! shuffling, synthetic data, noise sampling) run on ChaCha8 seeded from a
//! `u64`. ChaCha8 produces the same stream on every platform, and the
//! derived samplers below are written out explicitly so their output is
//! pinned by this crate rather than by a dependency's internals:
//!
//! * uniform `[0,1)`: top 53 bits of `next_u64`, scaled by 2^-53;
//! * standard normal: Box–Muller on two uniforms (pairs cached);
//! * shuffle: Fisher–Yates, index drawn as `next_u64 % (i+1)`.
//!
//! Seeds for sub-tasks are derived with SHA-256 over a labelled byte string
//! (`derive_seed`), so independent streams never alias.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Deterministic RNG used everywhere randomness is needed.
pub struct DetRng {
    inner: ChaCha8Rng,
    cached_normal: Option<f64>,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        DetRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
            cached_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Standard normal draw via Box–Muller. Generates values in pairs and
    /// caches the second.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform01();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fill `out` with standard normal draws.
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.standard_normal();
        }
    }

    /// In-place Fisher–Yates shuffle. For `i` from `len-1` down to 1 the
    /// element at `i` is swapped with index `next_u64() % (i+1)`.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            slice.swap(i, j);
        }
    }

    /// Shuffled `0..n`.
    pub fn shuffled_indices(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }

    /// Draw `k` distinct indices from `0..n` (first `k` of a shuffle).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx = self.shuffled_indices(n);
        idx.truncate(k.min(n));
        idx
    }
}

/// Derive a sub-seed from a base seed and a list of labels.
///
/// SHA-256 over `base (LE bytes) || 0x1f || label || 0x1f || ...`, first
/// eight digest bytes interpreted little-endian.
pub fn derive_seed(base: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for l in labels {
        h.update([0x1f]);
        h.update(l.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Hex-encoded SHA-256 of a byte slice. Used for content digests recorded in
/// run metadata.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = DetRng::new(42);
        let mut b = DetRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut a = DetRng::new(42);
        let mut b = DetRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
    }

    #[test]
    fn uniform01_in_range() {
        let mut rng = DetRng::new(7);
        for _ in 0..10_000 {
            let u = rng.uniform01();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments_close() {
        let mut rng = DetRng::new(1);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let z = rng.standard_normal();
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn shuffle_is_permutation_and_deterministic() {
        let mut rng = DetRng::new(9);
        let a = rng.shuffled_indices(1000);
        let mut rng = DetRng::new(9);
        let b = rng.shuffled_indices(1000);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn derive_seed_separates_labels() {
        let a = derive_seed(1, &["split"]);
        let b = derive_seed(1, &["shuffle"]);
        let c = derive_seed(2, &["split"]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(1, &["split"]));
    }
}
