//! Reconstruction-error distributions, Fisher's Linear Discriminant
//! separation, threshold sweeps, and confusion statistics.
//!
//! Statistics are population (divide by n) throughout. A sample whose error
//! exceeds the threshold is classified anomalous; equality counts as
//! normal.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vae::VaeModel;

/// Per-sample reconstruction L2 errors with population summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub dataset_id: String,
    pub errors: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub var: f64,
}

impl ErrorDistribution {
    pub fn from_errors(dataset_id: impl Into<String>, errors: Vec<f64>) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::Contract("error distribution needs samples".into()));
        }
        if errors.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::Data("errors must be finite and nonnegative".into()));
        }
        let n = errors.len() as f64;
        let mu = errors.iter().sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mu) * (e - mu)).sum::<f64>() / n;
        Ok(ErrorDistribution {
            dataset_id: dataset_id.into(),
            errors,
            mu,
            sigma: var.sqrt(),
            var,
        })
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Per-sample Euclidean reconstruction errors `‖x − x̂‖₂` under the model in
/// eval mode. Inputs must already carry the model's training scale factor.
pub fn l2_errors(
    model: &VaeModel,
    inputs: &Array2<f64>,
    dataset_id: &str,
) -> Result<ErrorDistribution> {
    if inputs.nrows() == 0 {
        return Err(Error::Contract(format!(
            "dataset `{dataset_id}` has no samples"
        )));
    }
    let xhat = model.reconstruct(inputs)?;
    let errors: Vec<f64> = inputs
        .rows()
        .into_iter()
        .zip(xhat.rows())
        .map(|(a, b)| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    ErrorDistribution::from_errors(dataset_id, errors)
}

/// Fisher's Linear Discriminant between two error distributions:
/// `S = (μ₁ − μ₂)² / (σ₁² + σ₂²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FldScore {
    /// (normal dataset, anomaly dataset).
    pub pair: (String, String),
    /// Separation score; `f64::INFINITY` signals zero combined variance
    /// with distinct means (serialized as the string "inf").
    #[serde(with = "serde_extended_f64")]
    pub s: f64,
}

/// Serialize non-finite floats as strings so JSON round-trips them.
mod serde_extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Num(v) => v,
            Raw::Str(s) if s == "inf" => f64::INFINITY,
            Raw::Str(s) if s == "-inf" => f64::NEG_INFINITY,
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom)?,
        })
    }
}

pub fn fld(normal: &ErrorDistribution, anomaly: &ErrorDistribution) -> Result<FldScore> {
    if normal.is_empty() || anomaly.is_empty() {
        return Err(Error::Contract("fld needs nonempty distributions".into()));
    }
    let var_sum = normal.var + anomaly.var;
    let mean_diff = normal.mu - anomaly.mu;
    let s = if var_sum == 0.0 {
        if mean_diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        mean_diff * mean_diff / var_sum
    };
    Ok(FldScore {
        pair: (normal.dataset_id.clone(), anomaly.dataset_id.clone()),
        s,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinMaxFld {
    pub min: FldScore,
    pub max: FldScore,
}

/// Minimum and maximum FLD over a family of anomaly datasets; ties broken
/// by lexicographic dataset id so reporting is deterministic.
pub fn min_max_fld(
    normal: &ErrorDistribution,
    anomalies: &[ErrorDistribution],
) -> Result<MinMaxFld> {
    if anomalies.is_empty() {
        return Err(Error::Contract("min_max_fld needs at least one anomaly set".into()));
    }
    let mut scores: Vec<FldScore> = anomalies
        .iter()
        .map(|a| fld(normal, a))
        .collect::<Result<_>>()?;
    scores.sort_by(|a, b| a.pair.1.cmp(&b.pair.1));
    let min = scores
        .iter()
        .min_by(|a, b| a.s.partial_cmp(&b.s).expect("S is never NaN"))
        .expect("nonempty")
        .clone();
    let max = scores
        .iter()
        .max_by(|a, b| {
            a.s.partial_cmp(&b.s)
                .expect("S is never NaN")
                // On ties keep the earlier (lexicographically smaller) id.
                .then(std::cmp::Ordering::Greater)
        })
        .expect("nonempty")
        .clone();
    Ok(MinMaxFld { min, max })
}

/// Decision threshold `γ = μ_normal + α · σ_normal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub alpha: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub alpha: f64,
    pub gamma: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    /// False positive rate (Type I error).
    pub type1_rate: f64,
    /// False negative rate (Type II error).
    pub type2_rate: f64,
    pub total_error: f64,
}

/// The paper-family default grid: α from 0.1 to 1.4 in steps of 0.1.
pub fn default_alphas() -> Vec<f64> {
    (1..=14).map(|i| i as f64 / 10.0).collect()
}

/// Confusion counts at an explicit threshold. Error strictly greater than
/// gamma classifies as anomaly.
pub fn confusion_at(
    normal: &ErrorDistribution,
    anomalies: &ErrorDistribution,
    alpha: f64,
    gamma: f64,
) -> ThresholdResult {
    let fp = normal.errors.iter().filter(|&&e| e > gamma).count();
    let tn = normal.len() - fp;
    let tp = anomalies.errors.iter().filter(|&&e| e > gamma).count();
    let fn_ = anomalies.len() - tp;
    let total = (normal.len() + anomalies.len()) as f64;
    let accuracy = (tp + tn) as f64 / total;
    ThresholdResult {
        alpha,
        gamma,
        tp,
        fp,
        tn,
        fn_,
        accuracy,
        type1_rate: fp as f64 / normal.len() as f64,
        type2_rate: fn_ as f64 / anomalies.len() as f64,
        total_error: 1.0 - accuracy,
    }
}

/// Sweep `γ = μ + α·σ` of the normal distribution over the α grid; best is
/// the minimal total error, ties broken by the smaller α.
pub fn threshold_sweep(
    normal: &ErrorDistribution,
    anomalies: &ErrorDistribution,
    alphas: &[f64],
) -> Result<(ThresholdResult, Vec<ThresholdResult>)> {
    if alphas.is_empty() {
        return Err(Error::Contract("threshold sweep needs alphas".into()));
    }
    if normal.is_empty() || anomalies.is_empty() {
        return Err(Error::Contract("threshold sweep needs nonempty distributions".into()));
    }
    // Sorted copies let each alpha resolve by binary search; the confusion
    // counts are identical to per-sample counting.
    let mut sorted_normal = normal.errors.clone();
    sorted_normal.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut sorted_anomaly = anomalies.errors.clone();
    sorted_anomaly.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let above = |sorted: &[f64], gamma: f64| sorted.len() - sorted.partition_point(|&e| e <= gamma);

    let mut all = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let gamma = normal.mu + alpha * normal.sigma;
        let fp = above(&sorted_normal, gamma);
        let tp = above(&sorted_anomaly, gamma);
        let tn = normal.len() - fp;
        let fn_ = anomalies.len() - tp;
        let total = (normal.len() + anomalies.len()) as f64;
        let accuracy = (tp + tn) as f64 / total;
        all.push(ThresholdResult {
            alpha,
            gamma,
            tp,
            fp,
            tn,
            fn_,
            accuracy,
            type1_rate: fp as f64 / normal.len() as f64,
            type2_rate: fn_ as f64 / anomalies.len() as f64,
            total_error: 1.0 - accuracy,
        });
    }
    let best = all
        .iter()
        .min_by(|a, b| {
            a.total_error
                .partial_cmp(&b.total_error)
                .expect("finite")
                .then(a.alpha.partial_cmp(&b.alpha).expect("finite"))
        })
        .expect("nonempty")
        .clone();
    Ok((best, all))
}

/// Per-anomaly-set share of the false negatives in a balanced evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetBreakdown {
    pub dataset_id: String,
    pub samples: usize,
    pub false_negatives: usize,
    /// Fraction of all false negatives contributed by this set (0 when
    /// there are none).
    pub fn_share: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub result: ThresholdResult,
    pub per_set: Vec<SetBreakdown>,
}

/// Confusion statistics of a balanced evaluation set at a fixed threshold,
/// with the false-negative composition per anomaly dataset.
pub fn accuracy_eval(
    model: &VaeModel,
    normal: &Array2<f64>,
    anomaly_sets: &BTreeMap<String, Array2<f64>>,
    threshold: Threshold,
) -> Result<AccuracyReport> {
    if normal.nrows() == 0 {
        return Err(Error::Contract("accuracy eval: empty normal set".into()));
    }
    if anomaly_sets.is_empty() || anomaly_sets.values().any(|m| m.nrows() == 0) {
        return Err(Error::Contract("accuracy eval: empty anomaly set".into()));
    }
    let normal_dist = l2_errors(model, normal, "normal")?;
    let fp = normal_dist.errors.iter().filter(|&&e| e > threshold.gamma).count();
    let tn = normal_dist.len() - fp;

    let mut tp = 0usize;
    let mut fn_total = 0usize;
    let mut per_set = Vec::with_capacity(anomaly_sets.len());
    for (id, set) in anomaly_sets {
        let dist = l2_errors(model, set, id)?;
        let set_tp = dist.errors.iter().filter(|&&e| e > threshold.gamma).count();
        let set_fn = dist.len() - set_tp;
        tp += set_tp;
        fn_total += set_fn;
        per_set.push(SetBreakdown {
            dataset_id: id.clone(),
            samples: dist.len(),
            false_negatives: set_fn,
            fn_share: 0.0,
        });
    }
    for b in per_set.iter_mut() {
        b.fn_share = if fn_total == 0 {
            0.0
        } else {
            b.false_negatives as f64 / fn_total as f64
        };
    }

    let n_anom: usize = anomaly_sets.values().map(|m| m.nrows()).sum();
    let total = (normal.nrows() + n_anom) as f64;
    let accuracy = (tp + tn) as f64 / total;
    Ok(AccuracyReport {
        result: ThresholdResult {
            alpha: threshold.alpha,
            gamma: threshold.gamma,
            tp,
            fp,
            tn,
            fn_: fn_total,
            accuracy,
            type1_rate: fp as f64 / normal.nrows() as f64,
            type2_rate: fn_total as f64 / n_anom as f64,
            total_error: 1.0 - accuracy,
        },
        per_set,
    })
}

/// Fixed-bin histogram over the pooled range of several distributions.
/// 60 bins by default; shared edges make overlaid densities comparable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_left: Vec<f64>,
    pub bin_width: f64,
    /// Per dataset (in input order): counts per bin.
    pub counts: Vec<Vec<u64>>,
    /// Per dataset: density per bin (count / (n * width)); integrates to 1.
    pub densities: Vec<Vec<f64>>,
}

pub const DEFAULT_HISTOGRAM_BINS: usize = 60;

pub fn histogram(distributions: &[&ErrorDistribution], bins: usize) -> Result<Histogram> {
    if distributions.is_empty() || bins == 0 {
        return Err(Error::Contract("histogram needs datasets and bins".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for d in distributions {
        for &e in &d.errors {
            lo = lo.min(e);
            hi = hi.max(e);
        }
    }
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let bin_left: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = Vec::with_capacity(distributions.len());
    let mut densities = Vec::with_capacity(distributions.len());
    for d in distributions {
        let mut c = vec![0u64; bins];
        for &e in &d.errors {
            let mut idx = ((e - lo) / width) as usize;
            if idx >= bins {
                idx = bins - 1; // the maximum lands in the last bin
            }
            c[idx] += 1;
        }
        let n = d.errors.len() as f64;
        densities.push(c.iter().map(|&k| k as f64 / (n * width)).collect());
        counts.push(c);
    }
    Ok(Histogram {
        bin_left,
        bin_width: width,
        counts,
        densities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    fn dist(id: &str, errors: Vec<f64>) -> ErrorDistribution {
        ErrorDistribution::from_errors(id, errors).unwrap()
    }

    #[test]
    fn population_statistics() {
        let d = dist("x", vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.mu, 2.5);
        assert_eq!(d.var, 1.25);
        assert_eq!(d.sigma, 1.25f64.sqrt());
    }

    #[test]
    fn fld_zero_for_equal_means() {
        let a = dist("a", vec![1.0, 2.0, 3.0]);
        let b = dist("b", vec![0.0, 2.0, 4.0]);
        assert_eq!(fld(&a, &b).unwrap().s, 0.0);
    }

    #[test]
    fn fld_direct_formula() {
        // mu 10 vs 12, sigma 1 each -> S = 4 / 2 = 2.
        let a = dist("a", vec![9.0, 11.0]);
        let b = dist("b", vec![11.0, 13.0]);
        assert_eq!(fld(&a, &b).unwrap().s, 2.0);
    }

    #[test]
    fn fld_is_symmetric() {
        let mut rng = DetRng::new(1);
        for _ in 0..1000 {
            let a = dist(
                "a",
                (0..20).map(|_| rng.uniform01() * 3.0).collect(),
            );
            let b = dist(
                "b",
                (0..20).map(|_| rng.uniform01() * 3.0 + 0.5).collect(),
            );
            assert_eq!(fld(&a, &b).unwrap().s, fld(&b, &a).unwrap().s);
        }
    }

    #[test]
    fn fld_scale_invariance_exact_for_power_of_two_scales() {
        let mut rng = DetRng::new(2);
        for round in 0..1000 {
            let a: Vec<f64> = (0..30).map(|_| rng.uniform01() * 2.0).collect();
            let b: Vec<f64> = (0..30).map(|_| rng.uniform01() * 2.0 + 1.0).collect();
            let c = (2.0f64).powi((round % 13) as i32 - 4);
            let s0 = fld(&dist("a", a.clone()), &dist("b", b.clone())).unwrap().s;
            let s1 = fld(
                &dist("a", a.iter().map(|e| e * c).collect()),
                &dist("b", b.iter().map(|e| e * c).collect()),
            )
            .unwrap()
            .s;
            assert_eq!(s0.to_bits(), s1.to_bits(), "scale {c}");
        }
    }

    #[test]
    fn fld_shift_invariance_two_sided() {
        let mut rng = DetRng::new(3);
        for _ in 0..200 {
            let a: Vec<f64> = (0..25).map(|_| rng.uniform01()).collect();
            let b: Vec<f64> = (0..25).map(|_| rng.uniform01() + 0.3).collect();
            let shift = rng.uniform01() * 5.0;
            let s0 = fld(&dist("a", a.clone()), &dist("b", b.clone())).unwrap().s;
            let s1 = fld(
                &dist("a", a.iter().map(|e| e + shift).collect()),
                &dist("b", b.iter().map(|e| e + shift).collect()),
            )
            .unwrap()
            .s;
            assert!((s0 - s1).abs() <= 1e-9 * s0.abs().max(1.0));
        }
    }

    #[test]
    fn fld_monte_carlo_matches_analytic() {
        // N(0,1) vs N(3,1): S = 9/2. Both shifted by +10 to keep errors
        // nonnegative; FLD is shift-invariant.
        let mut rng = DetRng::new(4);
        let n = 100_000;
        let a: Vec<f64> = (0..n).map(|_| rng.standard_normal() + 10.0).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.standard_normal() + 13.0).collect();
        let s = fld(&dist("a", a), &dist("b", b)).unwrap().s;
        assert!((s - 4.5).abs() < 0.15, "S = {s}");
    }

    #[test]
    fn fld_degenerate_cases() {
        let a = dist("a", vec![1.0, 1.0]);
        let b = dist("b", vec![2.0, 2.0]);
        assert!(fld(&a, &b).unwrap().s.is_infinite());
        let c = dist("c", vec![1.0, 1.0]);
        assert_eq!(fld(&a, &c).unwrap().s, 0.0);
    }

    #[test]
    fn fld_score_serde_handles_infinity() {
        let score = FldScore {
            pair: ("a".into(), "b".into()),
            s: f64::INFINITY,
        };
        let json = serde_json::to_string(&score).unwrap();
        let back: FldScore = serde_json::from_str(&json).unwrap();
        assert!(back.s.is_infinite());
        let finite = FldScore {
            pair: ("a".into(), "b".into()),
            s: 1.25,
        };
        let json = serde_json::to_string(&finite).unwrap();
        let back: FldScore = serde_json::from_str(&json).unwrap();
        assert_eq!(back.s, 1.25);
    }

    #[test]
    fn min_max_over_three_sets() {
        let normal = dist("n", vec![0.0, 2.0]);
        // S values: 0.5, 1.2, 3.0 by construction below.
        let anomalies = vec![
            dist("s05", vec![1.0 + 1.0, 1.0 - 1.0, 2.0 + 1.0, 2.0 - 1.0]),
            dist("s12", vec![2.2, 2.2, 3.0, 3.0]),
            dist("far", vec![4.0, 4.0, 6.0, 6.0]),
        ];
        let mm = min_max_fld(&normal, &anomalies).unwrap();
        assert_eq!(mm.min.pair.1, "s05");
        assert_eq!(mm.max.pair.1, "far");
        assert!(mm.min.s < mm.max.s);
    }

    #[test]
    fn min_max_single_set_coincide() {
        let normal = dist("n", vec![0.0, 1.0]);
        let anomalies = vec![dist("a", vec![2.0, 3.0])];
        let mm = min_max_fld(&normal, &anomalies).unwrap();
        assert_eq!(mm.min, mm.max);
    }

    #[test]
    fn confusion_matches_hand_counted_example() {
        let normal = dist("n", vec![0.1, 0.2, 0.9]);
        let anomaly = dist("a", vec![0.5, 1.1, 1.2]);
        let r = confusion_at(&normal, &anomaly, f64::NAN, 0.6);
        assert_eq!((r.fp, r.tn, r.tp, r.fn_), (1, 2, 2, 1));
        assert!((r.accuracy - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn separable_case_reaches_perfect_accuracy() {
        let normal = dist("n", vec![0.1, 0.2, 0.3]);
        let anomaly = dist("a", vec![10.0, 11.0, 12.0]);
        let (best, _) = threshold_sweep(&normal, &anomaly, &default_alphas()).unwrap();
        assert_eq!(best.accuracy, 1.0);
    }

    #[test]
    fn sweep_matches_brute_force_on_random_instances() {
        let mut rng = DetRng::new(5);
        for _ in 0..50 {
            let n = 5 + (rng.next_u64() % 200) as usize;
            let m = 5 + (rng.next_u64() % 200) as usize;
            let normal = dist("n", (0..n).map(|_| rng.uniform01() * 2.0).collect());
            let anomaly = dist("a", (0..m).map(|_| rng.uniform01() * 2.0 + 0.4).collect());
            let alphas = default_alphas();
            let (_, all) = threshold_sweep(&normal, &anomaly, &alphas).unwrap();
            for r in &all {
                let brute = confusion_at(&normal, &anomaly, r.alpha, r.gamma);
                assert_eq!((r.tp, r.fp, r.tn, r.fn_), (brute.tp, brute.fp, brute.tn, brute.fn_));
            }
        }
    }

    #[test]
    fn best_threshold_ties_break_to_smaller_alpha() {
        // Fully separable: every alpha achieves accuracy 1, so the smallest
        // alpha must win.
        let normal = dist("n", vec![0.1, 0.1, 0.1]);
        let anomaly = dist("a", vec![5.0, 5.0]);
        let (best, _) = threshold_sweep(&normal, &anomaly, &default_alphas()).unwrap();
        assert_eq!(best.alpha, 0.1);
    }

    #[test]
    fn accuracy_is_piecewise_constant_in_gamma() {
        let normal = dist("n", vec![0.1, 0.5, 0.9]);
        let anomaly = dist("a", vec![0.6, 1.0]);
        // Two gammas inside the same inter-sample interval (0.6, 0.9).
        let a = confusion_at(&normal, &anomaly, 0.0, 0.7);
        let b = confusion_at(&normal, &anomaly, 0.0, 0.85);
        assert_eq!(a.accuracy, b.accuracy);
        assert_eq!((a.tp, a.fp), (b.tp, b.fp));
    }

    #[test]
    fn histogram_density_integrates_to_one() {
        let mut rng = DetRng::new(6);
        let d1 = dist("a", (0..500).map(|_| rng.uniform01() * 3.0).collect());
        let d2 = dist("b", (0..300).map(|_| rng.uniform01() * 2.0 + 1.0).collect());
        let h = histogram(&[&d1, &d2], DEFAULT_HISTOGRAM_BINS).unwrap();
        assert_eq!(h.bin_left.len(), 60);
        let sizes = [500usize, 300];
        for (i, (counts, density)) in h.counts.iter().zip(&h.densities).enumerate() {
            assert_eq!(counts.iter().sum::<u64>() as usize, sizes[i]);
            let integral: f64 = density.iter().map(|d| d * h.bin_width).sum();
            assert!((integral - 1.0).abs() < 1e-9, "integral {integral}");
        }
    }
}
