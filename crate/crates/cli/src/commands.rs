//! Command implementations.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use stylevec_core::anomaly::{
    accuracy_eval, fld, histogram, l2_errors, min_max_fld, threshold_sweep,
    ErrorDistribution, Threshold, DEFAULT_HISTOGRAM_BINS,
};
use stylevec_core::config::{AblationArm, EmbeddingProvider, RunConfig};
use stylevec_core::corpus::{
    align, parse_version_file, split, FieldMapping, ParallelCorpus, ParallelVerse, VerseRef,
};
use stylevec_core::embed::cache::EmbeddingCache;
use stylevec_core::embed::remote::embed_corpus_remote;
use stylevec_core::embed::synthetic::{
    embed_synthetic, StyleRule, SyntheticSpec, SyntheticVersionSpec,
};
use stylevec_core::embed::{
    diffs_to_matrix, make_diffs, range_check_and_scale_matrix, vecfile, EmbeddingSet, RangePolicy,
};
use stylevec_core::report::{
    emit_accuracy_table, emit_error_histograms, emit_fld_grid, emit_loss_curves, FigureKind,
    FigureSpec,
};
use stylevec_core::sweep::{
    run_grid, select_best, Ablation, GridSpec, ResultsStore, SelectCriterion, SweepPlan,
    SweepRecord,
};
use stylevec_core::util::atomic_write;
use stylevec_core::vae::{train, write_loss_csv, VaeConfig, VaeMode, VaeModel};
use stylevec_core::{Error, Result};

use crate::args;
use crate::meta::{file_digest, MetaBuilder};

fn load_run_config(path: Option<&str>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(Path::new(p)),
        None => Ok(RunConfig::default()),
    }
}

fn require<T>(flag: Option<T>, fallback: Option<T>, name: &str) -> Result<T> {
    flag.or(fallback)
        .ok_or_else(|| Error::Config(format!("`--{name}` is required (flag or manifest)")))
}

fn non_empty(value: String, name: &str) -> Result<String> {
    if value.is_empty() {
        Err(Error::Config(format!("`--{name}` is required (flag or manifest)")))
    } else {
        Ok(value)
    }
}

fn load_corpus(path: &Path) -> Result<ParallelCorpus> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open corpus {}: {e}", path.display())))?;
    ParallelCorpus::load(std::io::BufReader::new(file))
}

fn parse_range_policy(s: Option<&str>, fallback: RangePolicy) -> Result<RangePolicy> {
    match s {
        None => Ok(fallback),
        Some("assert") => Ok(RangePolicy::Assert),
        Some("scale") => Ok(RangePolicy::Scale),
        Some(other) => Err(Error::Config(format!("unknown range policy `{other}`"))),
    }
}

/// Resolve a manifest-relative path.
fn resolve_path(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

// --- ingest -----------------------------------------------------------

pub fn ingest(config: Option<&str>, args: args::IngestArgs) -> Result<()> {
    let _ = load_run_config(config)?;
    let mapping = match &args.mapping {
        Some(path) => FieldMapping::from_toml(&std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read mapping {path}: {e}"))
        })?)?,
        None => FieldMapping::default(),
    };
    let versions: Vec<String> = if args.versions.is_empty() {
        args.files
            .iter()
            .map(|f| {
                Path::new(f)
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| f.clone())
            })
            .collect()
    } else {
        args.versions.clone()
    };
    if versions.len() != args.files.len() {
        return Err(Error::Config(format!(
            "{} version ids for {} files",
            versions.len(),
            args.files.len()
        )));
    }

    let mut version_files = HashMap::new();
    for (file, version) in args.files.iter().zip(&versions) {
        let bytes = std::fs::read(file)
            .map_err(|e| Error::Data(format!("cannot read {file}: {e}")))?;
        let verses = parse_version_file(&bytes, &mapping)?;
        eprintln!("parsed {:>6} verses from {file} as `{version}`", verses.len());
        version_files.insert(version.clone(), verses);
    }
    let report = align(&version_files, &versions)?;
    for (version, dropped) in &report.drops {
        eprintln!("aligned `{version}`: dropped {dropped} verses outside the intersection");
    }
    eprintln!(
        "corpus: {} verses x {} versions",
        report.corpus.len(),
        report.corpus.versions.len()
    );

    let out = Path::new(&args.out);
    let mut bytes = Vec::new();
    report.corpus.save(&mut bytes)?;
    atomic_write(out, &bytes)?;

    let mut meta = MetaBuilder::new(
        "ingest",
        serde_json::json!({
            "versions": versions,
            "mapping": mapping,
            "drops": report.drops,
        }),
    );
    for file in &args.files {
        meta = meta.input(Path::new(file))?;
    }
    meta.write(out, false)
}

// --- embed ------------------------------------------------------------

pub fn embed(config: Option<&str>, args: args::EmbedArgs) -> Result<()> {
    let cfg = load_run_config(config)?;
    let corpus_path = require(args.corpus.clone(), none_if_empty(&cfg.data.corpus), "corpus")?;
    let corpus = load_corpus(Path::new(&corpus_path))?;
    let provider = match args.provider.as_deref() {
        Some("remote") => EmbeddingProvider::Remote,
        Some("synthetic") => EmbeddingProvider::Synthetic,
        Some(other) => return Err(Error::Config(format!("unknown provider `{other}`"))),
        None => cfg.embedding.provider,
    };
    let out = Path::new(&args.out);

    let set = match provider {
        EmbeddingProvider::Synthetic => {
            let spec = match &args.synthetic_spec {
                Some(path) => SyntheticSpec::from_toml(&std::fs::read_to_string(path).map_err(
                    |e| Error::Config(format!("cannot read synthetic spec {path}: {e}")),
                )?)?,
                None => cfg.synthetic.clone().ok_or_else(|| {
                    Error::Config(
                        "synthetic provider needs --synthetic-spec or a [synthetic] manifest section"
                            .into(),
                    )
                })?,
            };
            let seed = args.seed.unwrap_or(cfg.embedding.seed);
            embed_synthetic(&corpus, &spec, seed)?
        }
        EmbeddingProvider::Remote => {
            let mut remote = cfg.embedding.remote.clone();
            if let Some(endpoint) = &args.endpoint {
                remote.base_url = endpoint.clone();
            }
            if let Some(d) = args.d {
                remote.expected_dim = d;
            }
            let model_id = args
                .model_id
                .clone()
                .unwrap_or_else(|| cfg.embedding.model_id.clone());
            let cache_dir = args
                .cache_dir
                .clone()
                .unwrap_or_else(|| cfg.embedding.cache_dir.clone());
            let cache = EmbeddingCache::open(cache_dir)?;
            embed_corpus_remote(&corpus, &model_id, &remote, &cache)?
        }
    };
    set.save_dir(out)?;
    eprintln!(
        "embedded {} versions x {} verses (d={}) -> {}",
        corpus.versions.len(),
        corpus.len(),
        set.d,
        out.display()
    );

    MetaBuilder::new(
        "embed",
        serde_json::json!({
            "provider": match provider {
                EmbeddingProvider::Remote => "remote",
                EmbeddingProvider::Synthetic => "synthetic",
            },
            "model_id": set.model_id,
            "d": set.d,
        }),
    )
    .input(Path::new(&corpus_path))?
    .write(out, true)
}

fn none_if_empty(s: &str) -> Option<String> {
    if s.is_empty() {
        None
    } else {
        Some(s.to_string())
    }
}

// --- dataset ----------------------------------------------------------

/// Split + provenance stored with a dataset.
#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub reference: String,
    pub target: String,
    pub no_subtract: bool,
    pub scale_factor: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub d: usize,
    pub corpus_digest: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetInfo {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("split.json"))
            .map_err(|e| Error::Data(format!("cannot read dataset {}: {e}", dir.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("split.json: {e}")))
    }
}

pub fn dataset(config: Option<&str>, args: args::DatasetArgs) -> Result<()> {
    let cfg = load_run_config(config)?;
    let corpus_path = require(args.corpus.clone(), none_if_empty(&cfg.data.corpus), "corpus")?;
    let emb_path = require(
        args.embeddings.clone(),
        none_if_empty(&cfg.data.embeddings),
        "embeddings",
    )?;
    let reference = non_empty(
        args.reference.clone().unwrap_or(cfg.versions.reference),
        "reference",
    )?;
    let target = non_empty(args.target.clone().unwrap_or(cfg.versions.target), "target")?;
    let fraction = args.split.unwrap_or(cfg.split.test_fraction);
    let seed = args.seed.unwrap_or(cfg.split.seed);
    let policy = parse_range_policy(args.range_policy.as_deref(), cfg.range.policy)?;

    if !args.no_subtract && reference == target {
        return Err(Error::Data(format!(
            "reference and target are both `{target}`: difference vectors would be all-zero"
        )));
    }

    let corpus = load_corpus(Path::new(&corpus_path))?;
    let embeddings = EmbeddingSet::load_dir(Path::new(&emb_path), &corpus)?;
    let mut matrix = if args.no_subtract {
        embeddings.version_matrix(&target)?
    } else {
        let diffs = make_diffs(&corpus, &embeddings, &reference, &target)?;
        diffs_to_matrix(&diffs, embeddings.d)?
    };
    if matrix.iter().all(|&v| v == 0.0) {
        return Err(Error::Data(
            "degenerate dataset: every vector is zero".into(),
        ));
    }
    let scale_factor = range_check_and_scale_matrix(&mut matrix, policy)?;
    let (train_idx, test_idx) = split(&corpus, fraction, seed)?;

    let out = Path::new(&args.out);
    std::fs::create_dir_all(out)?;
    let rows: Vec<Vec<f32>> = matrix
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&v| v as f32).collect())
        .collect();
    vecfile::write_vectors(&out.join("vectors.bin"), embeddings.d, &rows)?;

    let info = DatasetInfo {
        reference: reference.clone(),
        target: target.clone(),
        no_subtract: args.no_subtract,
        scale_factor,
        test_fraction: fraction,
        seed,
        d: embeddings.d,
        corpus_digest: file_digest(Path::new(&corpus_path))?,
        train: train_idx,
        test: test_idx,
    };
    atomic_write(
        &out.join("split.json"),
        serde_json::to_string_pretty(&info)
            .map_err(|e| Error::Data(format!("split serialization: {e}")))?
            .as_bytes(),
    )?;
    eprintln!(
        "dataset: {} train / {} test vectors (d={}, scale={})",
        info.train.len(),
        info.test.len(),
        info.d,
        info.scale_factor
    );

    MetaBuilder::new(
        "dataset",
        serde_json::json!({
            "reference": reference,
            "target": target,
            "no_subtract": args.no_subtract,
            "test_fraction": fraction,
            "seed": seed,
            "scale_factor": scale_factor,
        }),
    )
    .input(Path::new(&corpus_path))?
    .write(out, true)
}

fn load_dataset_matrix(dir: &Path) -> Result<(DatasetInfo, Array2<f64>)> {
    let info = DatasetInfo::load(dir)?;
    let (d, rows) = vecfile::read_vectors(&dir.join("vectors.bin"))?;
    if d != info.d {
        return Err(Error::Format(format!(
            "dataset dim {d} does not match split.json d {}",
            info.d
        )));
    }
    let mut matrix = Array2::zeros((rows.len(), d));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            matrix[[i, j]] = v as f64;
        }
    }
    Ok((info, matrix))
}

// --- train ------------------------------------------------------------

pub fn train_cmd(config: Option<&str>, args: args::TrainArgs) -> Result<()> {
    let cfg = load_run_config(config)?;
    let dataset_dir = Path::new(&args.dataset);
    let (info, matrix) = load_dataset_matrix(dataset_dir)?;

    let layers = require(args.layers, None, "layers")?;
    let feature_dim = require(args.feature_dim, None, "feature-dim")?;

    let mut model_config = VaeConfig::new(info.d, layers, feature_dim);
    model_config.mode = if args.variational {
        VaeMode::Variational
    } else {
        cfg.model.mode
    };
    model_config.kl_weight = args.beta.unwrap_or(cfg.model.kl_weight);
    model_config.bn_momentum = cfg.model.bn_momentum;
    model_config.bn_eps = cfg.model.bn_eps;
    model_config.training.adam_beta1 = cfg.training.adam_beta1;
    model_config.training.adam_beta2 = cfg.training.adam_beta2;
    model_config.training.adam_eps = cfg.training.adam_eps;
    model_config.training.lr = args.lr.unwrap_or(cfg.training.lr);
    model_config.training.batch_size = args.batch_size.unwrap_or(cfg.training.batch_size);
    model_config.training.max_epochs = args.epochs.unwrap_or(cfg.training.max_epochs);
    model_config.training.patience = args.patience.unwrap_or(cfg.training.patience);
    model_config.training.seed = args.seed.unwrap_or(0);

    let train_x = matrix.select(Axis(0), &info.train);
    let test_x = matrix.select(Axis(0), &info.test);

    let mut model = VaeModel::build(model_config.clone())?;
    model.metadata.scale_factor = info.scale_factor;
    model.metadata.reference_version = info.reference.clone();
    model.metadata.target_version = info.target.clone();
    model.metadata.ablation = if info.no_subtract {
        "no_subtraction".into()
    } else {
        "subtraction".into()
    };

    let history = train(&mut model, &train_x, &test_x)?;
    eprintln!(
        "trained {} epochs; best test loss {:.6} at epoch {}",
        history.epochs.len(),
        history.best_test_loss(),
        history.best_epoch
    );

    let out = Path::new(&args.out);
    model.save(out)?;
    if let Some(loss_csv) = &args.loss_csv {
        write_loss_csv(&history, Path::new(loss_csv))?;
    }

    MetaBuilder::new(
        "train",
        serde_json::json!({
            "config": model_config,
            "dataset": args.dataset,
            "best_epoch": history.best_epoch,
            "best_test_loss": history.best_test_loss(),
        }),
    )
    .input(&dataset_dir.join("vectors.bin"))?
    .input(&dataset_dir.join("split.json"))?
    .write(out, false)
}

// --- eval -------------------------------------------------------------

pub fn eval(config: Option<&str>, args: args::EvalArgs) -> Result<()> {
    let cfg = load_run_config(config)?;
    let model = VaeModel::load(Path::new(&args.model))?;
    let corpus_path = require(args.corpus.clone(), none_if_empty(&cfg.data.corpus), "corpus")?;
    let emb_path = require(
        args.embeddings.clone(),
        none_if_empty(&cfg.data.embeddings),
        "embeddings",
    )?;
    let anomalies = if args.anomalies.is_empty() {
        cfg.versions.anomalies.clone()
    } else {
        args.anomalies.clone()
    };
    if anomalies.is_empty() {
        return Err(Error::Config("`--anomalies` is required".into()));
    }
    let alphas = if args.alphas.is_empty() {
        cfg.alphas()
    } else {
        args.alphas.clone()
    };

    let corpus = load_corpus(Path::new(&corpus_path))?;
    let embeddings = EmbeddingSet::load_dir(Path::new(&emb_path), &corpus)?;
    let (info, matrix) = load_dataset_matrix(Path::new(&args.dataset))?;
    if (info.scale_factor - model.metadata.scale_factor).abs() > 1e-12 {
        return Err(Error::Contract(format!(
            "dataset scale factor {} does not match model scale factor {}",
            info.scale_factor, model.metadata.scale_factor
        )));
    }
    let no_subtract = model.metadata.ablation == "no_subtraction";

    let normal_test = matrix.select(Axis(0), &info.test);
    let normal = l2_errors(&model, &normal_test, &info.target)?;

    let mut anomaly_sets: BTreeMap<String, Array2<f64>> = BTreeMap::new();
    for id in &anomalies {
        let mut m = if no_subtract {
            embeddings.version_matrix(id)?
        } else {
            let diffs = make_diffs(&corpus, &embeddings, &info.reference, id)?;
            diffs_to_matrix(&diffs, embeddings.d)?
        };
        if model.metadata.scale_factor != 1.0 {
            m.mapv_inplace(|v| v / model.metadata.scale_factor);
        }
        anomaly_sets.insert(id.clone(), m.select(Axis(0), &info.test));
    }

    let mut dists = vec![normal.clone()];
    for (id, m) in &anomaly_sets {
        dists.push(l2_errors(&model, m, id)?);
    }

    let out = Path::new(&args.out);
    std::fs::create_dir_all(out)?;

    // Raw errors and distribution summaries.
    let mut errors_csv = String::from("dataset,index,error\n");
    let mut dist_csv = String::from("dataset,n,mu,sigma,var\n");
    for d in &dists {
        for (i, e) in d.errors.iter().enumerate() {
            errors_csv.push_str(&format!("{},{i},{e}\n", d.dataset_id));
        }
        dist_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            d.dataset_id,
            d.len(),
            d.mu,
            d.sigma,
            d.var
        ));
    }
    atomic_write(&out.join("errors.csv"), errors_csv.as_bytes())?;
    atomic_write(&out.join("distributions.csv"), dist_csv.as_bytes())?;

    // Histogram over shared 60-bin edges.
    let refs: Vec<&ErrorDistribution> = dists.iter().collect();
    let hist = histogram(&refs, DEFAULT_HISTOGRAM_BINS)?;
    let mut hist_csv = String::from("dataset,bin_left,count,density\n");
    for (di, d) in dists.iter().enumerate() {
        for (bi, left) in hist.bin_left.iter().enumerate() {
            hist_csv.push_str(&format!(
                "{},{left},{},{}\n",
                d.dataset_id, hist.counts[di][bi], hist.densities[di][bi]
            ));
        }
    }
    atomic_write(&out.join("histogram.csv"), hist_csv.as_bytes())?;

    // FLD per anomaly set plus min/max.
    let anomaly_dists = &dists[1..];
    let mut fld_csv = String::from("dataset,fld\n");
    for a in anomaly_dists {
        let score = fld(&normal, a)?;
        fld_csv.push_str(&format!("{},{}\n", a.dataset_id, score.s));
    }
    let mm = min_max_fld(&normal, anomaly_dists)?;
    fld_csv.push_str(&format!("min:{},{}\n", mm.min.pair.1, mm.min.s));
    fld_csv.push_str(&format!("max:{},{}\n", mm.max.pair.1, mm.max.s));
    atomic_write(&out.join("fld.csv"), fld_csv.as_bytes())?;

    // Threshold sweep against pooled anomalies.
    let pooled = ErrorDistribution::from_errors(
        "pooled",
        anomaly_dists
            .iter()
            .flat_map(|d| d.errors.iter().copied())
            .collect(),
    )?;
    let (best, all) = threshold_sweep(&normal, &pooled, &alphas)?;
    let mut th_csv =
        String::from("alpha,gamma,tp,fp,tn,fn,accuracy,type1_rate,type2_rate,total_error\n");
    for t in &all {
        th_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            t.alpha, t.gamma, t.tp, t.fp, t.tn, t.fn_, t.accuracy, t.type1_rate, t.type2_rate,
            t.total_error
        ));
    }
    atomic_write(&out.join("thresholds.csv"), th_csv.as_bytes())?;
    atomic_write(
        &out.join("best_threshold.json"),
        serde_json::to_string_pretty(&best)
            .map_err(|e| Error::Data(e.to_string()))?
            .as_bytes(),
    )?;

    // Balanced accuracy protocol at the best threshold.
    let balanced_n = args.balanced.unwrap_or(cfg.eval.balanced_samples);
    let report = balanced_report(
        &model,
        &normal_test,
        &anomaly_sets,
        Threshold {
            alpha: best.alpha,
            gamma: best.gamma,
        },
        balanced_n,
        cfg.run.base_seed,
    )?;
    atomic_write(
        &out.join("balanced_accuracy.json"),
        serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Data(e.to_string()))?
            .as_bytes(),
    )?;

    eprintln!(
        "eval: min FLD {:.4} ({}), max FLD {:.4} ({}), best alpha {} accuracy {:.4}",
        mm.min.s, mm.min.pair.1, mm.max.s, mm.max.pair.1, best.alpha, best.accuracy
    );

    MetaBuilder::new(
        "eval",
        serde_json::json!({
            "model": args.model,
            "anomalies": anomalies,
            "alphas": alphas,
            "balanced_samples": balanced_n,
        }),
    )
    .input(Path::new(&args.model))?
    .write(out, true)
}

fn balanced_report(
    model: &VaeModel,
    normal_test: &Array2<f64>,
    anomaly_sets: &BTreeMap<String, Array2<f64>>,
    threshold: Threshold,
    samples: usize,
    base_seed: u64,
) -> Result<stylevec_core::anomaly::AccuracyReport> {
    use stylevec_core::rng::{derive_seed, DetRng};
    let half = (samples / 2).max(1);
    let take_normal = half.min(normal_test.nrows());
    let mut rng = DetRng::new(derive_seed(base_seed, &["balanced", "normal"]));
    let mut rows = rng.sample_indices(normal_test.nrows(), take_normal);
    rows.sort_unstable();
    let normal_rows = normal_test.select(Axis(0), &rows);

    let per_set = (half / anomaly_sets.len().max(1)).max(1);
    let mut subsets = BTreeMap::new();
    for (id, m) in anomaly_sets {
        let take = per_set.min(m.nrows());
        let mut rng = DetRng::new(derive_seed(base_seed, &["balanced", id]));
        let mut rows = rng.sample_indices(m.nrows(), take);
        rows.sort_unstable();
        subsets.insert(id.clone(), m.select(Axis(0), &rows));
    }
    accuracy_eval(model, &normal_rows, &subsets, threshold)
}

// --- sweep ------------------------------------------------------------

pub fn sweep(config: Option<&str>, args: args::SweepArgs) -> Result<()> {
    let manifest_path = PathBuf::from(&args.manifest);
    let cfg = RunConfig::load(&manifest_path)?;
    let _ = config; // sweep is fully manifest-driven
    let base = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();

    let corpus_path = resolve_path(&base, &non_empty(cfg.data.corpus.clone(), "data.corpus")?);
    let emb_path = resolve_path(
        &base,
        &non_empty(cfg.data.embeddings.clone(), "data.embeddings")?,
    );
    let out_dir = resolve_path(
        &base,
        args.out_dir.as_deref().unwrap_or(&cfg.run.out_dir),
    );

    let corpus = load_corpus(&corpus_path)?;
    if let Some(expected) = &cfg.data.corpus_digest {
        let actual = file_digest(&corpus_path)?;
        if &actual != expected {
            return Err(Error::Data(format!(
                "corpus digest mismatch: manifest pins {expected}, file has {actual}"
            )));
        }
    }
    let embeddings = EmbeddingSet::load_dir(&emb_path, &corpus)?;
    let store = ResultsStore::open(&out_dir)?;

    let arms: Vec<Ablation> = match cfg.grid.ablation {
        AblationArm::Subtraction => vec![Ablation::Subtraction],
        AblationArm::NoSubtraction => vec![Ablation::NoSubtraction],
        AblationArm::Both => vec![Ablation::Subtraction, Ablation::NoSubtraction],
    };
    let workers = args.workers.unwrap_or(cfg.run.workers);

    let mut all_records: Vec<SweepRecord> = Vec::new();
    let mut anything_pending = false;
    for arm in arms {
        let grid = GridSpec {
            hidden_layer_values: cfg.grid.hidden_layers.clone(),
            feature_dims: cfg.grid.feature_dims.clone(),
            repeats: cfg.grid.repeats,
            ablation: arm,
        };
        let pending = grid.points().iter().filter(|p| !store.has(p, arm)).count();
        anything_pending |= pending > 0;
        eprintln!(
            "arm {:?}: {} grid points ({} to train)",
            arm,
            grid.points().len(),
            pending
        );
        let plan = SweepPlan {
            corpus: &corpus,
            embeddings: &embeddings,
            reference: cfg.versions.reference.clone(),
            target: cfg.versions.target.clone(),
            anomalies: cfg.versions.anomalies.clone(),
            grid,
            test_fraction: cfg.split.test_fraction,
            split_seed: cfg.split.seed,
            range_policy: cfg.range.policy,
            mode: cfg.model.mode,
            kl_weight: cfg.model.kl_weight,
            bn_momentum: cfg.model.bn_momentum,
            bn_eps: cfg.model.bn_eps,
            training: cfg.training.clone(),
            alphas: cfg.alphas(),
            balanced_samples: cfg.eval.balanced_samples,
            base_seed: cfg.run.base_seed,
            workers,
        };
        all_records.extend(run_grid(&plan, &store)?);
    }
    if !anything_pending {
        eprintln!("nothing to do: all records already exist");
    }

    write_summary_csv(&all_records, &out_dir)?;
    if let Ok(best) = select_best(&all_records, SelectCriterion::MaxMinFld) {
        let s = best.success().expect("select_best returns successes");
        eprintln!(
            "best grid point: L={} p={} repeat={} (min FLD {:.4}, balanced accuracy {:.4})",
            best.point.hidden_layers,
            best.point.feature_dim,
            best.point.repeat,
            s.min_max.min.s,
            s.balanced.result.accuracy
        );
    }

    MetaBuilder::new(
        "sweep",
        serde_json::to_value(&cfg).map_err(|e| Error::Data(e.to_string()))?,
    )
    .input(&corpus_path)?
    .input(&manifest_path)?
    .write(&out_dir, true)
}

fn write_summary_csv(records: &[SweepRecord], out_dir: &Path) -> Result<()> {
    let mut csv = String::from(
        "ablation,hidden_layers,feature_dim,repeat,status,converged,epochs,best_epoch,best_test_loss,min_fld,min_dataset,max_fld,max_dataset,best_alpha,best_gamma,best_accuracy,best_total_error,balanced_accuracy,balanced_type1,balanced_type2,split_digest,error\n",
    );
    for r in records {
        let arm = match r.ablation {
            Ablation::Subtraction => "subtraction",
            Ablation::NoSubtraction => "no_subtraction",
        };
        match r.success() {
            Some(s) => {
                csv.push_str(&format!(
                    "{arm},{},{},{},ok,{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},\n",
                    r.point.hidden_layers,
                    r.point.feature_dim,
                    r.point.repeat,
                    s.converged,
                    s.loss_history.epochs.len(),
                    s.loss_history.best_epoch,
                    s.loss_history.best_test_loss(),
                    s.min_max.min.s,
                    s.min_max.min.pair.1,
                    s.min_max.max.s,
                    s.min_max.max.pair.1,
                    s.best_threshold.alpha,
                    s.best_threshold.gamma,
                    s.best_threshold.accuracy,
                    s.best_threshold.total_error,
                    s.balanced.result.accuracy,
                    s.balanced.result.type1_rate,
                    s.balanced.result.type2_rate,
                    r.split_digest,
                ));
            }
            None => {
                let error = match &r.outcome {
                    stylevec_core::sweep::Outcome::Failed { error } => error.replace(',', ";"),
                    _ => String::new(),
                };
                csv.push_str(&format!(
                    "{arm},{},{},{},failed,,,,,,,,,,,,,,,,{},{error}\n",
                    r.point.hidden_layers, r.point.feature_dim, r.point.repeat, r.split_digest,
                ));
            }
        }
    }
    atomic_write(&out_dir.join("sweep_summary.csv"), csv.as_bytes())
}

// --- report -----------------------------------------------------------

pub fn report(config: Option<&str>, args: args::ReportArgs) -> Result<()> {
    let _ = load_run_config(config)?;
    let store = ResultsStore::open(Path::new(&args.results))?;
    let arm = match args.ablation.as_str() {
        "no_subtraction" => Ablation::NoSubtraction,
        _ => Ablation::Subtraction,
    };
    let records: Vec<SweepRecord> = store
        .read_all()?
        .into_iter()
        .filter(|r| r.ablation == arm)
        .collect();
    if records.is_empty() {
        return Err(Error::Data(format!(
            "no records for ablation `{}` in {}",
            args.ablation, args.results
        )));
    }
    let out = Path::new(&args.out);
    std::fs::create_dir_all(out)?;

    let mut written = Vec::new();
    let mut warnings = Vec::new();
    if matches!(args.kind.as_str(), "all" | "loss_curves") {
        let spec = FigureSpec::from_records(FigureKind::LossCurves, &records)?;
        let (files, warns) = emit_loss_curves(&records, &spec, out)?;
        written.extend(files);
        warnings.extend(warns);
    }
    if matches!(args.kind.as_str(), "all" | "error_histograms") {
        let spec = FigureSpec::from_records(FigureKind::ErrorHistograms, &records)?;
        let (files, warns) = emit_error_histograms(&records, &spec, out)?;
        written.extend(files);
        warnings.extend(warns);
    }
    if matches!(args.kind.as_str(), "all" | "fld_grid") {
        written.extend(emit_fld_grid(&records, out)?);
    }
    if matches!(args.kind.as_str(), "all" | "accuracy_table") {
        written.extend(emit_accuracy_table(&records, out)?);
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    for f in &written {
        eprintln!("wrote {}", f.display());
    }

    MetaBuilder::new(
        "report",
        serde_json::json!({
            "results": args.results,
            "kind": args.kind,
            "ablation": args.ablation,
        }),
    )
    .write(out, true)
}

// --- synth ------------------------------------------------------------

pub fn synth(config: Option<&str>, args: args::SynthArgs) -> Result<()> {
    let cfg = load_run_config(config)?;
    let verses = args.verses.unwrap_or(2000);
    let d = args.d.unwrap_or(64);
    let seed = args.seed.unwrap_or(cfg.embedding.seed);
    let noise = args.noise.unwrap_or(0.01);
    let content_scale = args.content_scale.unwrap_or(0.05);
    let style_norm = args.style_norm.unwrap_or(0.5);

    let spec = match &args.spec {
        Some(path) => SyntheticSpec::from_toml(&std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read synthetic spec {path}: {e}"))
        })?)?,
        None => {
            // Anomaly gaps are multiples of the expected norm of the noise
            // carried by a difference vector, sqrt(2 d) * noise.
            let unit = (2.0 * d as f64).sqrt() * noise;
            let mut versions = vec![
                SyntheticVersionSpec {
                    id: args.reference.clone(),
                    style: StyleRule::Zero,
                },
                SyntheticVersionSpec {
                    id: args.trained.clone(),
                    style: StyleRule::RandomNorm { norm: style_norm },
                },
            ];
            for pair in &args.style_gaps {
                let (id, gap) = pair.split_once('=').ok_or_else(|| {
                    Error::Config(format!("bad --style-gaps entry `{pair}`, expected id=gap"))
                })?;
                let gap: f64 = gap
                    .parse()
                    .map_err(|e| Error::Config(format!("bad gap in `{pair}`: {e}")))?;
                versions.push(SyntheticVersionSpec {
                    id: id.to_string(),
                    style: StyleRule::OffsetFrom {
                        anchor: args.trained.clone(),
                        norm: gap * unit,
                    },
                });
            }
            SyntheticSpec {
                d,
                content_scale,
                noise_scale: noise,
                versions,
            }
        }
    };
    spec.validate()?;
    if verses < 2 {
        return Err(Error::Config("need at least 2 verses".into()));
    }

    let version_ids: Vec<String> = spec.versions.iter().map(|v| v.id.clone()).collect();
    let corpus = ParallelCorpus {
        versions: version_ids.clone(),
        verses: (0..verses)
            .map(|i| {
                let chapter = (i / 100) as u32 + 1;
                let verse = (i % 100) as u32 + 1;
                ParallelVerse {
                    verse_ref: VerseRef::new("Synthetic", chapter, verse),
                    texts: version_ids
                        .iter()
                        .map(|v| format!("{v} {chapter}:{verse}"))
                        .collect(),
                }
            })
            .collect(),
    };

    let set = embed_synthetic(&corpus, &spec, seed)?;

    let out = Path::new(&args.out);
    std::fs::create_dir_all(out)?;
    let mut bytes = Vec::new();
    corpus.save(&mut bytes)?;
    atomic_write(&out.join("corpus.jsonl"), &bytes)?;
    set.save_dir(&out.join("emb"))?;
    let spec_toml =
        toml_string(&spec).map_err(|e| Error::Data(format!("spec serialization: {e}")))?;
    atomic_write(&out.join("synthetic_spec.toml"), spec_toml.as_bytes())?;

    eprintln!(
        "synthetic corpus: {} verses x {} versions (d={}, seed={}) -> {}",
        verses,
        version_ids.len(),
        spec.d,
        seed,
        out.display()
    );

    MetaBuilder::new(
        "synth",
        serde_json::json!({
            "spec": spec,
            "verses": verses,
            "seed": seed,
        }),
    )
    .write(out, true)
}

fn toml_string(spec: &SyntheticSpec) -> std::result::Result<String, String> {
    // TOML requires tables after values; serde_json value ordering is fine
    // because SyntheticSpec keeps scalar fields first.
    toml::to_string_pretty(spec).map_err(|e| e.to_string())
}
