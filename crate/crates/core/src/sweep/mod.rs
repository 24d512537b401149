//! Hyperparameter grid execution: train every (hidden-layers, feature-dim)
//! combination (with seed replicates), evaluate error distributions, FLD
//! scores and thresholds per grid point, and stream immutable records to a
//! results store. Completed records are never recomputed, so an interrupted
//! sweep resumes where it stopped.

mod store;

pub use store::ResultsStore;

use std::collections::BTreeMap;
use std::panic::AssertUnwindSafe;
use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::anomaly::{
    accuracy_eval, fld, l2_errors, min_max_fld, threshold_sweep, AccuracyReport,
    ErrorDistribution, FldScore, MinMaxFld, Threshold, ThresholdResult,
};
use crate::config::TrainingConfig;
use crate::corpus::{split, split_digest, ParallelCorpus};
use crate::embed::{
    diffs_to_matrix, make_diffs, range_check_and_scale_matrix, EmbeddingSet, RangePolicy,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, DetRng};
use crate::vae::{train, LossHistory, VaeConfig, VaeMode, VaeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Train/evaluate on reference-minus-target difference vectors.
    Subtraction,
    /// Train/evaluate on raw target-version embeddings.
    NoSubtraction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hidden_layers: usize,
    pub feature_dim: usize,
    pub repeat: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub hidden_layer_values: Vec<usize>,
    pub feature_dims: Vec<usize>,
    /// Seed replicates per combination.
    pub repeats: usize,
    pub ablation: Ablation,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            hidden_layer_values: (1..=6).collect(),
            feature_dims: vec![8, 16, 32, 64, 128, 256],
            repeats: 3,
            ablation: Ablation::Subtraction,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &l in &self.hidden_layer_values {
            for &p in &self.feature_dims {
                for r in 0..self.repeats {
                    out.push(GridPoint {
                        hidden_layers: l,
                        feature_dim: p,
                        repeat: r,
                    });
                }
            }
        }
        out
    }
}

/// Payload of a successful grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSuccess {
    pub scale_factor: f64,
    pub loss_history: LossHistory,
    pub converged: bool,
    /// Normal (target) test distribution first, anomaly sets after, sorted
    /// by dataset id.
    pub distributions: Vec<ErrorDistribution>,
    pub flds: Vec<FldScore>,
    pub min_max: MinMaxFld,
    pub best_threshold: ThresholdResult,
    pub thresholds: Vec<ThresholdResult>,
    pub balanced: AccuracyReport,
    pub model_file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", content = "data", rename_all = "snake_case")]
pub enum Outcome {
    Ok(Box<SweepSuccess>),
    Failed { error: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub point: GridPoint,
    pub ablation: Ablation,
    pub seed: u64,
    pub split_digest: String,
    pub outcome: Outcome,
}

impl SweepRecord {
    pub fn success(&self) -> Option<&SweepSuccess> {
        match &self.outcome {
            Outcome::Ok(s) => Some(s),
            Outcome::Failed { .. } => None,
        }
    }
}

/// Everything a sweep needs; one instance describes one ablation arm.
#[derive(Clone)]
pub struct SweepPlan<'a> {
    pub corpus: &'a ParallelCorpus,
    pub embeddings: &'a EmbeddingSet,
    pub reference: String,
    pub target: String,
    pub anomalies: Vec<String>,
    pub grid: GridSpec,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub range_policy: RangePolicy,
    pub mode: VaeMode,
    pub kl_weight: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub training: TrainingConfig,
    pub alphas: Vec<f64>,
    pub balanced_samples: usize,
    pub base_seed: u64,
    pub workers: usize,
}

struct ArmDatasets {
    train: Array2<f64>,
    test: Array2<f64>,
    /// Anomaly matrices restricted to the test-split verses, keyed by
    /// dataset id, already carrying the training scale factor.
    anomalies: BTreeMap<String, Array2<f64>>,
    scale_factor: f64,
}

fn prepare_datasets(
    plan: &SweepPlan<'_>,
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<ArmDatasets> {
    let arm = plan.grid.ablation;
    let mut full = match arm {
        Ablation::Subtraction => {
            let diffs = make_diffs(plan.corpus, plan.embeddings, &plan.reference, &plan.target)?;
            diffs_to_matrix(&diffs, plan.embeddings.d)?
        }
        Ablation::NoSubtraction => plan.embeddings.version_matrix(&plan.target)?,
    };
    let scale_factor = range_check_and_scale_matrix(&mut full, plan.range_policy)?;

    let train = full.select(Axis(0), train_idx);
    let test = full.select(Axis(0), test_idx);

    let mut anomalies = BTreeMap::new();
    let mut ids = plan.anomalies.clone();
    ids.sort();
    ids.dedup();
    for id in ids {
        let mut m = match arm {
            Ablation::Subtraction => {
                let diffs = make_diffs(plan.corpus, plan.embeddings, &plan.reference, &id)?;
                diffs_to_matrix(&diffs, plan.embeddings.d)?
            }
            Ablation::NoSubtraction => plan.embeddings.version_matrix(&id)?,
        };
        if scale_factor != 1.0 {
            m.mapv_inplace(|v| v / scale_factor);
        }
        anomalies.insert(id, m.select(Axis(0), test_idx));
    }
    Ok(ArmDatasets {
        train,
        test,
        anomalies,
        scale_factor,
    })
}

/// Seed for one grid point, derived from the base seed and the point
/// coordinates so any point reproduces in isolation.
pub fn point_seed(base_seed: u64, point: &GridPoint) -> u64 {
    derive_seed(
        base_seed,
        &[
            "grid",
            &point.hidden_layers.to_string(),
            &point.feature_dim.to_string(),
            &point.repeat.to_string(),
        ],
    )
}

fn train_and_eval(
    plan: &SweepPlan<'_>,
    data: &ArmDatasets,
    point: &GridPoint,
    seed: u64,
    store: &ResultsStore,
) -> Result<SweepSuccess> {
    let mut config = VaeConfig::new(
        plan.embeddings.d,
        point.hidden_layers,
        point.feature_dim,
    );
    config.mode = plan.mode;
    config.kl_weight = plan.kl_weight;
    config.bn_momentum = plan.bn_momentum;
    config.bn_eps = plan.bn_eps;
    config.training.lr = plan.training.lr;
    config.training.batch_size = plan.training.batch_size;
    config.training.max_epochs = plan.training.max_epochs;
    config.training.patience = plan.training.patience;
    config.training.adam_beta1 = plan.training.adam_beta1;
    config.training.adam_beta2 = plan.training.adam_beta2;
    config.training.adam_eps = plan.training.adam_eps;
    config.training.seed = seed;

    let mut model = VaeModel::build(config)?;
    model.metadata.scale_factor = data.scale_factor;
    model.metadata.reference_version = plan.reference.clone();
    model.metadata.target_version = plan.target.clone();
    model.metadata.ablation = match plan.grid.ablation {
        Ablation::Subtraction => "subtraction".into(),
        Ablation::NoSubtraction => "no_subtraction".into(),
    };

    let history = train(&mut model, &data.train, &data.test)?;
    let converged = history.converged(5, 0.05);

    let normal = l2_errors(&model, &data.test, &plan.target)?;
    let mut anomaly_dists = Vec::with_capacity(data.anomalies.len());
    for (id, m) in &data.anomalies {
        anomaly_dists.push(l2_errors(&model, m, id)?);
    }
    let flds: Vec<FldScore> = anomaly_dists
        .iter()
        .map(|a| fld(&normal, a))
        .collect::<Result<_>>()?;
    let min_max = min_max_fld(&normal, &anomaly_dists)?;

    let pooled_errors: Vec<f64> = anomaly_dists
        .iter()
        .flat_map(|d| d.errors.iter().copied())
        .collect();
    let pooled = ErrorDistribution::from_errors("pooled", pooled_errors)?;
    let (best, thresholds) = threshold_sweep(&normal, &pooled, &plan.alphas)?;

    let balanced = balanced_accuracy(plan, data, &model, &best)?;

    let model_path = store.model_path(point, plan.grid.ablation);
    model.save(&model_path)?;

    Ok(SweepSuccess {
        scale_factor: data.scale_factor,
        loss_history: history,
        converged,
        distributions: std::iter::once(normal).chain(anomaly_dists).collect(),
        flds,
        min_max,
        best_threshold: best,
        thresholds,
        balanced,
        model_file: model_path.to_string_lossy().into_owned(),
    })
}

/// Balanced accuracy protocol: an even split between normal samples and
/// anomalies (spread over the anomaly sets), drawn from the test split with
/// seeds shared across grid points, classified at the grid point's best
/// threshold.
fn balanced_accuracy(
    plan: &SweepPlan<'_>,
    data: &ArmDatasets,
    model: &VaeModel,
    best: &ThresholdResult,
) -> Result<AccuracyReport> {
    let half = (plan.balanced_samples / 2).max(1);
    let n_normal = data.test.nrows();
    let take_normal = half.min(n_normal);
    let mut rng = DetRng::new(derive_seed(plan.base_seed, &["balanced", "normal"]));
    let normal_rows = {
        let mut rows = rng.sample_indices(n_normal, take_normal);
        rows.sort_unstable();
        data.test.select(Axis(0), &rows)
    };

    let per_set = (half / data.anomalies.len().max(1)).max(1);
    let mut subsets = BTreeMap::new();
    for (id, m) in &data.anomalies {
        let take = per_set.min(m.nrows());
        let mut rng = DetRng::new(derive_seed(plan.base_seed, &["balanced", id]));
        let mut rows = rng.sample_indices(m.nrows(), take);
        rows.sort_unstable();
        subsets.insert(id.clone(), m.select(Axis(0), &rows));
    }
    accuracy_eval(
        model,
        &normal_rows,
        &subsets,
        Threshold {
            alpha: best.alpha,
            gamma: best.gamma,
        },
    )
}

/// Run every grid point of the plan's ablation arm. Completed records are
/// reused; failures are recorded per point without aborting the grid.
/// Returns all records for the plan's grid in deterministic order.
pub fn run_grid(plan: &SweepPlan<'_>, store: &ResultsStore) -> Result<Vec<SweepRecord>> {
    if plan.anomalies.is_empty() {
        return Err(Error::Config("sweep needs at least one anomaly version".into()));
    }
    for v in std::iter::once(&plan.target)
        .chain(std::iter::once(&plan.reference))
        .chain(plan.anomalies.iter())
    {
        if !plan.embeddings.has_version(v) {
            return Err(Error::Coverage(format!("no embeddings for version `{v}`")));
        }
    }

    let (train_idx, test_idx) = split(plan.corpus, plan.test_fraction, plan.split_seed)?;
    let digest = split_digest(&train_idx, &test_idx);
    let data = prepare_datasets(plan, &train_idx, &test_idx)?;

    let tasks = plan.grid.points();
    let pending: Vec<&GridPoint> = tasks
        .iter()
        .filter(|p| !store.has(p, plan.grid.ablation))
        .collect();

    let next = AtomicUsize::new(0);
    let workers = plan.workers.max(1).min(pending.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= pending.len() {
                    return;
                }
                let point = pending[i];
                let seed = point_seed(plan.base_seed, point);
                let outcome = match std::panic::catch_unwind(AssertUnwindSafe(|| {
                    train_and_eval(plan, &data, point, seed, store)
                })) {
                    Ok(Ok(success)) => Outcome::Ok(Box::new(success)),
                    Ok(Err(e)) => Outcome::Failed {
                        error: e.to_string(),
                    },
                    Err(panic) => Outcome::Failed {
                        error: panic
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "panic in grid worker".into()),
                    },
                };
                let record = SweepRecord {
                    point: point.clone(),
                    ablation: plan.grid.ablation,
                    seed,
                    split_digest: digest.clone(),
                    outcome,
                };
                // Atomic per-record write; a failure here is a store bug, so
                // surface it loudly rather than dropping the record.
                store.write(&record).expect("results store write failed");
            });
        }
    });

    tasks
        .iter()
        .map(|p| store.read(p, plan.grid.ablation))
        .collect()
}

/// The no-subtraction arm of the ablation: same grid, same split, raw
/// target embeddings instead of difference vectors.
pub fn ablation_no_subtraction(
    plan: &SweepPlan<'_>,
    store: &ResultsStore,
) -> Result<Vec<SweepRecord>> {
    let mut arm = plan.clone();
    arm.grid.ablation = Ablation::NoSubtraction;
    run_grid(&arm, store)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectCriterion {
    /// Maximize the minimum FLD over anomaly sets.
    MaxMinFld,
    /// Minimize the best threshold's total error.
    MinTotalError,
}

/// Pick the best successful record; ties break toward fewer hidden layers,
/// then smaller feature dim, then lower repeat.
pub fn select_best(
    records: &[SweepRecord],
    criterion: SelectCriterion,
) -> Result<&SweepRecord> {
    let mut best: Option<(&SweepRecord, f64)> = None;
    for record in records {
        let Some(success) = record.success() else {
            continue;
        };
        let value = match criterion {
            SelectCriterion::MaxMinFld => success.min_max.min.s,
            SelectCriterion::MinTotalError => -success.best_threshold.total_error,
        };
        let better = match best {
            None => true,
            Some((b, bv)) => {
                value > bv
                    || (value == bv
                        && (
                            record.point.hidden_layers,
                            record.point.feature_dim,
                            record.point.repeat,
                        ) < (
                            b.point.hidden_layers,
                            b.point.feature_dim,
                            b.point.repeat,
                        ))
            }
        };
        if better {
            best = Some((record, value));
        }
    }
    best.map(|(r, _)| r)
        .ok_or_else(|| Error::Sweep("no successful grid point".into()))
}
