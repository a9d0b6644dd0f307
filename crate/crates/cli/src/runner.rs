//! Experiment execution: dataset management, per-seed training and
//! evaluation cells, artifact writing, and the operations behind each CLI
//! subcommand.
//!
//! Every artifact except the manifest is a pure function of the config file
//! and the seed, so re-running a cell reproduces it byte for byte. The
//! manifest additionally records wall-clock time and is the one
//! deliberately non-reproducible file.

use crate::checkpoint::{
    load_checkpoint, save_checkpoint, sha256_hex, CheckpointMeta, CkError, TrainingSummary,
    CHECKPOINT_VERSION,
};
use crate::config::{ConfigError, ExperimentConfig, MethodKind};
use crate::report::{emit_report, Report, ReportError};
use serde::Serialize;
use srlfi::metrics::{
    c2st_accuracy, ks_uniform, metrics_csv, metrics_csv_row, sbc_ranks, EvaluationSet, KsTest,
    MetricsError, MetricsReport, METRICS_CSV_HEADER,
};
use srlfi::nn::{CriticNet, GeneratorNet};
use srlfi::seeds::{derive, derive2, STREAM_DATA, STREAM_EVAL, STREAM_INIT, STREAM_TEST};
use srlfi::simulators::dataset::Dataset;
use srlfi::training::{history_csv, train_gan, train_sr, TrainError, TrainReport};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;
use thiserror::Error;

const DATASET_FORMAT_VERSION: u32 = 1;

/// Top-level failure classification; [`CliError::exit_code`] maps it to the
/// process exit status (2 for configuration problems, 3 for numeric
/// failures, 1 otherwise).
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(format!("io error: {e}"))
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<CkError> for CliError {
    fn from(e: CkError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Other(e.to_string())
    }
}

/// Artifact locations for one (config, seed) cell. The dataset file is
/// shared across methods; everything else is method-specific.
#[derive(Debug, Clone)]
pub struct CellPaths {
    pub dataset: PathBuf,
    pub metrics: PathBuf,
    pub history: PathBuf,
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub sbc: PathBuf,
    pub c2st: PathBuf,
}

pub fn cell_paths(cfg: &ExperimentConfig, seed: u64) -> CellPaths {
    let model = cfg.model.name();
    let method = cfg.method.name();
    let n_total = cfg.n_train + cfg.n_test;
    let stem = format!("{method}_{model}_n{}_seed{seed}", cfg.n_train);
    CellPaths {
        dataset: cfg.out_dir.join(format!("dataset_{model}_n{n_total}_seed{seed}.bin")),
        metrics: cfg.out_dir.join(format!("metrics_{stem}.csv")),
        history: cfg.out_dir.join(format!("history_{stem}.csv")),
        checkpoint: cfg.out_dir.join(format!("checkpoint_{stem}.ck")),
        manifest: cfg.out_dir.join(format!("manifest_{stem}.json")),
        sbc: cfg.out_dir.join(format!("sbc_{stem}.csv")),
        c2st: cfg.out_dir.join(format!("c2st_{stem}.csv")),
    }
}

/// Loads the cell's dataset if present, otherwise simulates and saves it.
/// The dataset seed is derived from the cell seed, so the file content
/// depends only on (model, sizes, seed).
pub fn ensure_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset, CliError> {
    let path = cell_paths(cfg, seed).dataset;
    let n_total = cfg.n_train + cfg.n_test;
    if path.exists() {
        let ds = Dataset::load(&path).map_err(|e| CliError::Other(e.to_string()))?;
        if ds.model_name != cfg.model.name() || ds.n != n_total {
            return Err(CliError::Other(format!(
                "dataset {} holds {} pairs from '{}', expected {n_total} from '{}'",
                path.display(),
                ds.n,
                ds.model_name,
                cfg.model.name()
            )));
        }
        return Ok(ds);
    }
    let ds = Dataset::generate(&cfg.model, n_total, derive(seed, STREAM_DATA))
        .map_err(|e| CliError::Other(e.to_string()))?;
    ds.save(&path)?;
    Ok(ds)
}

/// Trains a generator for the configured method on the first `n_train`
/// pairs of the dataset.
pub fn train_cell(
    cfg: &ExperimentConfig,
    seed: u64,
    dataset: &Dataset,
) -> Result<(GeneratorNet, TrainReport), CliError> {
    let all = dataset.pairs();
    let train_pairs = &all[..cfg.n_train];
    let mut generator = cfg.build_generator(derive2(seed, STREAM_INIT, 0))?;

    let report = if cfg.method == MethodKind::Gan {
        let mut critic = CriticNet::init(
            cfg.model.parameter_dim(),
            cfg.model.data_dim(),
            &cfg.gan.critic_hidden,
            cfg.activation,
            derive2(seed, STREAM_INIT, 1),
        )
        .map_err(|e| CliError::Other(e.to_string()))?;
        train_gan(&mut generator, &mut critic, train_pairs, &cfg.gan_train_config(seed))?
    } else {
        let take = cfg.batch_size.min(train_pairs.len());
        let rows: Vec<Vec<f64>> =
            train_pairs[..take].iter().map(|(theta, _)| theta.to_vec()).collect();
        let rule = cfg.scoring_rule(&rows)?;
        train_sr(&mut generator, train_pairs, &cfg.sr_train_config(rule, seed))?
    };
    Ok((generator, report))
}

/// Evaluates the generator on the held-out tail of the dataset.
pub fn evaluate_cell(
    cfg: &ExperimentConfig,
    generator: &GeneratorNet,
    dataset: &Dataset,
    seed: u64,
    epochs_run: usize,
) -> Result<MetricsReport, CliError> {
    let all = dataset.pairs();
    let test_pairs = &all[cfg.n_train..];
    let eval =
        EvaluationSet::from_generator(generator, test_pairs, cfg.n_post, derive(seed, STREAM_TEST))?;
    let mut report = MetricsReport::compute(&eval)?;
    let finite = report
        .per_component
        .iter()
        .all(|c| c.nrmse.value.is_finite() && c.r_squared.is_finite() && c.calibration_error.is_finite());
    if !finite {
        return Err(CliError::Numeric("evaluation produced non-finite metrics".into()));
    }
    report.early_stop_epoch = Some(epochs_run);
    Ok(report)
}

#[derive(Serialize)]
struct Manifest<'a> {
    package_version: &'static str,
    dataset_format_version: u32,
    checkpoint_format_version: u32,
    model: &'a str,
    method: &'a str,
    seed: u64,
    dataset_seed: u64,
    n_train: usize,
    n_test: usize,
    n_post: usize,
    m: usize,
    config_sha256: &'a str,
    config_toml: &'a str,
    training: &'a TrainingSummary,
    wall_time_sec: f64,
    artifacts: BTreeMap<&'static str, String>,
}

fn write_manifest(
    cfg: &ExperimentConfig,
    paths: &CellPaths,
    seed: u64,
    config_hash: &str,
    training: &TrainingSummary,
    wall_time_sec: f64,
    with_metrics: bool,
) -> Result<(), CliError> {
    let mut artifacts = BTreeMap::new();
    let rel = |p: &Path| p.file_name().unwrap().to_string_lossy().into_owned();
    artifacts.insert("dataset", rel(&paths.dataset));
    artifacts.insert("history", rel(&paths.history));
    artifacts.insert("checkpoint", rel(&paths.checkpoint));
    if with_metrics {
        artifacts.insert("metrics", rel(&paths.metrics));
    }
    let manifest = Manifest {
        package_version: env!("CARGO_PKG_VERSION"),
        dataset_format_version: DATASET_FORMAT_VERSION,
        checkpoint_format_version: CHECKPOINT_VERSION,
        model: cfg.model.name(),
        method: cfg.method.name(),
        seed,
        dataset_seed: derive(seed, STREAM_DATA),
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        n_post: cfg.n_post,
        m: cfg.m,
        config_sha256: config_hash,
        config_toml: &cfg.raw,
        training,
        wall_time_sec,
        artifacts,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Other(format!("manifest serialization failed: {e}")))?;
    std::fs::write(&paths.manifest, json + "\n")?;
    Ok(())
}

fn run_cell(cfg: &ExperimentConfig, seed: u64, config_hash: &str) -> Result<(), CliError> {
    let t0 = Instant::now();
    let paths = cell_paths(cfg, seed);
    let dataset = ensure_dataset(cfg, seed)?;
    let (generator, train_report) = train_cell(cfg, seed, &dataset)?;
    let metrics = evaluate_cell(cfg, &generator, &dataset, seed, train_report.epochs_run)?;

    std::fs::write(
        &paths.metrics,
        metrics_csv(&metrics, cfg.method.name(), cfg.model.name(), cfg.n_train, cfg.m),
    )?;
    std::fs::write(&paths.history, history_csv(&train_report.history))?;
    let training = TrainingSummary::from_report(&train_report);
    save_checkpoint(
        &paths.checkpoint,
        &generator,
        cfg.model.name(),
        cfg.method.name(),
        config_hash,
        training.clone(),
    )?;
    write_manifest(cfg, &paths, seed, config_hash, &training, t0.elapsed().as_secs_f64(), true)?;
    Ok(())
}

/// Runs `f` once per configured seed, fanning out over at most `threads`
/// worker threads. The first error wins; remaining cells still finish.
fn for_each_seed<F>(cfg: &ExperimentConfig, threads: usize, f: F) -> Result<(), CliError>
where
    F: Fn(u64) -> Result<(), CliError> + Sync,
{
    let workers = threads.max(1).min(cfg.seeds.len());
    if workers <= 1 {
        for &seed in &cfg.seeds {
            f(seed)?;
        }
        return Ok(());
    }
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<CliError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cfg.seeds.len() {
                    break;
                }
                if let Err(e) = f(cfg.seeds[i]) {
                    let mut slot = failure.lock().unwrap();
                    if slot.is_none() {
                        *slot = Some(e);
                    }
                    break;
                }
            });
        }
    });
    match failure.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Full pipeline: simulate, train, evaluate, and aggregate for every seed.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<Report, CliError> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let config_hash = sha256_hex(cfg.raw.as_bytes());
    for_each_seed(cfg, threads, |seed| run_cell(cfg, seed, &config_hash))?;
    Ok(emit_report(&cfg.out_dir)?)
}

/// Simulates and persists the dataset for every seed.
pub fn simulate_only(cfg: &ExperimentConfig, threads: usize) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    for_each_seed(cfg, threads, |seed| ensure_dataset(cfg, seed).map(|_| ()))
}

/// Trains and checkpoints a generator for every seed, without evaluation.
pub fn train_only(cfg: &ExperimentConfig, threads: usize) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let config_hash = sha256_hex(cfg.raw.as_bytes());
    for_each_seed(cfg, threads, |seed| {
        let t0 = Instant::now();
        let paths = cell_paths(cfg, seed);
        let dataset = ensure_dataset(cfg, seed)?;
        let (generator, train_report) = train_cell(cfg, seed, &dataset)?;
        std::fs::write(&paths.history, history_csv(&train_report.history))?;
        let training = TrainingSummary::from_report(&train_report);
        save_checkpoint(
            &paths.checkpoint,
            &generator,
            cfg.model.name(),
            cfg.method.name(),
            &config_hash,
            training.clone(),
        )?;
        write_manifest(
            cfg,
            &paths,
            seed,
            &config_hash,
            &training,
            t0.elapsed().as_secs_f64(),
            false,
        )?;
        Ok(())
    })
}

fn load_cell_generator(
    cfg: &ExperimentConfig,
    seed: u64,
    checkpoint_override: Option<&Path>,
) -> Result<(GeneratorNet, CheckpointMeta), CliError> {
    let path = match checkpoint_override {
        Some(p) => p.to_path_buf(),
        None => cell_paths(cfg, seed).checkpoint,
    };
    let (generator, meta) = load_checkpoint(&path)?;
    if meta.model != cfg.model.name() {
        return Err(CliError::Other(format!(
            "checkpoint {} was trained on '{}', config says '{}'",
            path.display(),
            meta.model,
            cfg.model.name()
        )));
    }
    Ok((generator, meta))
}

/// Evaluates previously trained checkpoints and writes metric CSVs.
pub fn evaluate_only(
    cfg: &ExperimentConfig,
    threads: usize,
    checkpoint_override: Option<&Path>,
) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    for_each_seed(cfg, threads, |seed| {
        let paths = cell_paths(cfg, seed);
        let (generator, meta) = load_cell_generator(cfg, seed, checkpoint_override)?;
        let dataset = ensure_dataset(cfg, seed)?;
        let metrics = evaluate_cell(cfg, &generator, &dataset, seed, meta.training.epochs_run)?;
        std::fs::write(
            &paths.metrics,
            metrics_csv(&metrics, cfg.method.name(), cfg.model.name(), cfg.n_train, cfg.m),
        )?;
        Ok(())
    })
}

/// Per-component simulation-based calibration summary for one seed.
pub struct SbcSummary {
    pub seed: u64,
    pub per_component: Vec<KsTest>,
}

/// Rank-statistic calibration check against the model prior, using each
/// seed's checkpointed generator as the posterior sampler. Ranks go to
/// `sbc_*.csv`; the returned summaries hold the per-component uniformity
/// tests.
pub fn sbc_only(
    cfg: &ExperimentConfig,
    n_priors: usize,
    n_draws: usize,
    checkpoint_override: Option<&Path>,
) -> Result<Vec<SbcSummary>, CliError> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut summaries = Vec::new();
    for &seed in &cfg.seeds {
        let paths = cell_paths(cfg, seed);
        let (generator, _) = load_cell_generator(cfg, seed, checkpoint_override)?;
        let result = sbc_ranks(&cfg.model, n_priors, n_draws, seed, |y, n, draw_seed| {
            generator
                .sample_posterior(y, n, draw_seed)
                .map(|t| t.into_data())
                .map_err(MetricsError::from)
        })?;

        let mut csv = String::from("component,rank\n");
        for (j, component_ranks) in result.ranks.iter().enumerate() {
            for rank in component_ranks {
                csv.push_str(&format!("{},{rank}\n", j + 1));
            }
        }
        std::fs::write(&paths.sbc, csv)?;

        let mut per_component = Vec::with_capacity(result.ranks.len());
        for component_ranks in &result.ranks {
            per_component.push(ks_uniform(component_ranks, result.n_draws + 1)?);
        }
        summaries.push(SbcSummary { seed, per_component });
    }
    Ok(summaries)
}

/// Classifier two-sample test accuracy for one seed.
pub struct C2stSummary {
    pub seed: u64,
    pub accuracy: f64,
}

/// Compares each seed's checkpointed generator against the model's
/// reference posterior at the first held-out observation. Accuracy near
/// 0.5 means the two sample sets are indistinguishable.
pub fn c2st_only(
    cfg: &ExperimentConfig,
    checkpoint_override: Option<&Path>,
) -> Result<Vec<C2stSummary>, CliError> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut summaries = Vec::new();
    for &seed in &cfg.seeds {
        let paths = cell_paths(cfg, seed);
        let (generator, _) = load_cell_generator(cfg, seed, checkpoint_override)?;
        let dataset = ensure_dataset(cfg, seed)?;
        let all = dataset.pairs();
        let (_, y0) = all[cfg.n_train];
        let p = cfg.model.parameter_dim();

        let gen_draws = generator
            .sample_posterior(y0, cfg.n_post, derive2(seed, STREAM_EVAL, 0))
            .map_err(|e| CliError::Other(e.to_string()))?
            .into_data();
        let ref_draws = cfg
            .model
            .reference_posterior(y0, cfg.n_post, derive2(seed, STREAM_EVAL, 1))
            .map_err(|e| CliError::Other(e.to_string()))?;
        let accuracy = c2st_accuracy(&gen_draws, &ref_draws, p, seed)?;

        let mut csv = String::from(METRICS_CSV_HEADER);
        csv.push_str(&metrics_csv_row(
            cfg.method.name(),
            cfg.model.name(),
            cfg.n_train,
            cfg.m,
            "c2st",
            "all",
            accuracy,
        ));
        std::fs::write(&paths.c2st, csv)?;
        summaries.push(C2stSummary { seed, accuracy });
    }
    Ok(summaries)
}
