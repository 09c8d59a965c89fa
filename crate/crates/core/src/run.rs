//! Experiment configuration and the drivers behind each command-line verb.
//!
//! Every driver is a pure function of its [`RunConfig`]: data, initial
//! parameters and shuffle order derive from the run seed through fixed RNG
//! streams, and nothing time-dependent is written except `wall_ms` columns.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::VanillaConfig;
use crate::cell::{Activation, BoundaryRule, CellConfig, MixSquash, UpdateVariant};
use crate::error::{Error, Result};
use crate::eval::{efficiency_report, evaluate, export_trace, persistence_baseline, EfficiencyReport, MetricsReport};
use crate::gradcheck::{gradcheck, GradcheckOptions, GradcheckReport};
use crate::io::write_atomic;
use crate::linalg::{InitScheme, Rng};
use crate::model::{Model, ModelKind, Recurrent};
use crate::tasks::{
    gen_adding_problem, gen_distractor_classification, gen_synthetic_forecast, load_csv_series, window_and_split,
    ForecastComponents, Normalizer, SequenceBatch, Series, SplitSpec, WindowSpec,
};
use crate::train::{Checkpoint, EpochRecord, LossKind, ResetPolicy, TrainConfig, Trainer};

const TRAIN_STREAM: u64 = 1;
const VAL_STREAM: u64 = 2;
const TEST_STREAM: u64 = 3;
const INIT_STREAM: u64 = 4;
const SERIES_STREAM: u64 = 5;
const GRADCHECK_STREAM: u64 = 6;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EVAL_FILE: &str = "eval.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const BENCH_FILE: &str = "bench.json";
pub const GRADCHECK_FILE: &str = "gradcheck.json";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const ABLATION_SUMMARY_FILE: &str = "ablation_summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub task: TaskConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub gradcheck: GradcheckConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Adding {
        length: usize,
        n_train: usize,
        n_val: usize,
        n_test: usize,
    },
    Recall {
        length: usize,
        classes: usize,
        #[serde(default)]
        distractor_fraction: f64,
        n_train: usize,
        n_val: usize,
        n_test: usize,
    },
    Forecast {
        source: SeriesSource,
        #[serde(default)]
        window: WindowSpec,
        #[serde(default)]
        split: SplitSpec,
        #[serde(default = "yes")]
        normalize: bool,
        /// Columns to predict; all columns when absent.
        #[serde(default)]
        target_cols: Option<Vec<String>>,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeriesSource {
    Synthetic(ForecastComponents),
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelArch {
    Petnn,
    VanillaRnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_arch")]
    pub kind: ModelArch,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_sigmoid")]
    pub time_activation: Activation,
    #[serde(default = "default_tanh")]
    pub candidate_activation: Activation,
    #[serde(default = "default_tanh")]
    pub output_activation: Activation,
    #[serde(default)]
    pub mix_gate_squash: MixSquash,
    #[serde(default)]
    pub boundary_rule: BoundaryRule,
    #[serde(default)]
    pub update_variant: UpdateVariant,
    #[serde(default)]
    pub init: InitScheme,
    /// Initial bias of the update gate; see [`crate::CellParams::set_update_gate_bias`].
    #[serde(default)]
    pub update_gate_bias: f64,
}

fn default_arch() -> ModelArch {
    ModelArch::Petnn
}
fn default_hidden() -> usize {
    64
}
fn default_sigmoid() -> Activation {
    Activation::Sigmoid
}
fn default_tanh() -> Activation {
    Activation::Tanh
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelArch::Petnn,
            hidden_dim: default_hidden(),
            time_activation: Activation::Sigmoid,
            candidate_activation: Activation::Tanh,
            output_activation: Activation::Tanh,
            mix_gate_squash: MixSquash::default(),
            boundary_rule: BoundaryRule::default(),
            update_variant: UpdateVariant::default(),
            init: InitScheme::default(),
            update_gate_bias: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn cell_config(&self, input_dim: usize) -> CellConfig {
        CellConfig {
            input_dim,
            hidden_dim: self.hidden_dim,
            time_activation: self.time_activation,
            candidate_activation: self.candidate_activation,
            output_activation: self.output_activation,
            mix_gate_squash: self.mix_gate_squash,
            boundary_rule: self.boundary_rule,
            update_variant: self.update_variant,
        }
    }

    /// Fresh model with parameters drawn from the run's init stream.
    pub fn build(&self, input_dim: usize, out_dim: usize, seed: u64) -> Result<Model> {
        let mut rng = Rng::fork(seed, INIT_STREAM);
        match self.kind {
            ModelArch::Petnn => {
                let cfg = self.cell_config(input_dim);
                let mut model = Model::petnn(cfg, out_dim, &mut rng, self.init)?;
                if let Recurrent::Petnn { params, .. } = &mut model.core {
                    params.set_update_gate_bias(&cfg, self.update_gate_bias);
                }
                Ok(model)
            }
            ModelArch::VanillaRnn => Model::vanilla(
                VanillaConfig {
                    input_dim,
                    hidden_dim: self.hidden_dim,
                },
                out_dim,
                &mut rng,
                self.init,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    #[serde(default = "default_gc_len")]
    pub seq_len: usize,
    /// Overrides the model's hidden size for the check.
    #[serde(default = "default_gc_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_gc_tol")]
    pub tolerance: f64,
    /// Minimum `|t_raw|` at an accepted point.
    #[serde(default = "default_gc_margin")]
    pub switch_margin: f64,
}

fn default_gc_len() -> usize {
    6
}
fn default_gc_hidden() -> usize {
    5
}
fn default_gc_tol() -> f64 {
    1e-5
}
fn default_gc_margin() -> f64 {
    1e-3
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            seq_len: default_gc_len(),
            hidden_dim: default_gc_hidden(),
            tolerance: default_gc_tol(),
            switch_margin: default_gc_margin(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    /// Fill derived fields: the training seed and the task's default loss.
    pub fn resolve(&mut self) {
        self.train.seed = self.seed;
        if self.train.loss.is_none() {
            self.train.loss = Some(match self.task {
                TaskConfig::Recall { .. } => LossKind::CrossEntropy,
                _ => LossKind::Mse,
            });
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.model.hidden_dim == 0 {
            return Err(Error::Config("model.hidden_dim must be ≥ 1".into()));
        }
        let classification = matches!(self.task, TaskConfig::Recall { .. });
        if classification != (self.train.loss == Some(LossKind::CrossEntropy)) {
            return Err(Error::Config("cross_entropy loss goes with the recall task and only with it".into()));
        }
        match &self.task {
            TaskConfig::Adding { length, n_train, .. } | TaskConfig::Recall { length, n_train, .. } => {
                if *length < 2 || *n_train == 0 {
                    return Err(Error::Config("synthetic tasks need length ≥ 2 and n_train ≥ 1".into()));
                }
            }
            TaskConfig::Forecast { window, split, .. } => {
                window.validate()?;
                split.validate()?;
            }
        }
        if let TaskConfig::Recall { classes, distractor_fraction, .. } = self.task {
            if classes < 2 || !(0.0..1.0).contains(&distractor_fraction) {
                return Err(Error::Config("recall needs classes ≥ 2 and distractor_fraction in [0, 1)".into()));
            }
        }
        let g = &self.gradcheck;
        if g.seq_len == 0 || g.seq_len > 8 || g.hidden_dim == 0 || g.hidden_dim > 8 {
            return Err(Error::Config("gradcheck.seq_len and gradcheck.hidden_dim must lie in 1..=8".into()));
        }
        Ok(())
    }

    /// Canonical JSON echo of the resolved configuration.
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical echo.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_value()).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.seed = self.seed;
        t
    }
}

/// Train, validation and test splits for a run, plus what evaluation needs
/// to know about them.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: SequenceBatch,
    pub val: SequenceBatch,
    pub test: SequenceBatch,
    /// For forecasting: input feature index of each target column.
    pub target_features: Vec<usize>,
    pub normalizer: Option<Normalizer>,
}

impl TaskData {
    pub fn input_dim(&self) -> usize {
        self.train.features()
    }

    pub fn out_dim(&self) -> usize {
        self.train.out_dim()
    }

    pub fn split(&self, name: &str) -> Result<&SequenceBatch> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            other => Err(Error::Config(format!("unknown split `{other}` (expected train, val or test)"))),
        }
    }

    pub fn hashes(&self) -> DataHashes {
        DataHashes {
            train: self.train.content_hash(),
            val: self.val.content_hash(),
            test: self.test.content_hash(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataHashes {
    pub train: String,
    pub val: String,
    pub test: String,
}

fn load_series(source: &SeriesSource, seed: u64) -> Result<Series> {
    match source {
        SeriesSource::Synthetic(c) => gen_synthetic_forecast(&mut Rng::fork(seed, SERIES_STREAM), c),
        SeriesSource::Csv { path } => load_csv_series(path),
    }
}

pub fn build_data(task: &TaskConfig, seed: u64) -> Result<TaskData> {
    let rng = |stream| Rng::fork(seed, stream);
    match task {
        TaskConfig::Adding {
            length,
            n_train,
            n_val,
            n_test,
        } => Ok(TaskData {
            train: gen_adding_problem(&mut rng(TRAIN_STREAM), *n_train, *length)?,
            val: gen_adding_problem(&mut rng(VAL_STREAM), *n_val, *length)?,
            test: gen_adding_problem(&mut rng(TEST_STREAM), *n_test, *length)?,
            target_features: Vec::new(),
            normalizer: None,
        }),
        TaskConfig::Recall {
            length,
            classes,
            distractor_fraction,
            n_train,
            n_val,
            n_test,
        } => {
            let gen = |stream, n| gen_distractor_classification(&mut rng(stream), n, *length, *classes, *distractor_fraction);
            Ok(TaskData {
                train: gen(TRAIN_STREAM, *n_train)?,
                val: gen(VAL_STREAM, *n_val)?,
                test: gen(TEST_STREAM, *n_test)?,
                target_features: Vec::new(),
                normalizer: None,
            })
        }
        TaskConfig::Forecast {
            source,
            window,
            split,
            normalize,
            target_cols,
        } => {
            let raw = load_series(source, seed)?;
            let targets = raw.column_indices(target_cols.as_deref())?;
            let bounds = split.bounds(raw.len());
            let (series, normalizer) = if *normalize {
                let norm = Normalizer::fit(&raw, bounds[0])?;
                (norm.apply(&raw)?, Some(norm))
            } else {
                (raw, None)
            };
            let mut splits = window_and_split(&series, &targets, window, split)?;
            for b in [&mut splits.train, &mut splits.val, &mut splits.test] {
                b.normalized = *normalize;
            }
            Ok(TaskData {
                train: splits.train,
                val: splits.val,
                test: splits.test,
                target_features: targets,
                normalizer,
            })
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn metrics_csv(records: &[EpochRecord]) -> String {
    let mut s = String::from(EpochRecord::CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: u64,
    pub data: DataHashes,
    pub model_kind: ModelKind,
    pub param_count: u64,
    pub epochs_completed: usize,
    pub outputs: Vec<String>,
    pub version: String,
}

/// End-of-run metrics, timing excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_completed: usize,
    pub final_val: Option<MetricsReport>,
    pub test: Option<MetricsReport>,
    /// Forecasting only: last-value persistence on the test split.
    pub persistence_test: Option<MetricsReport>,
    pub reset_policy: ResetPolicy,
}

/// Outcome of one training run, kept in memory for callers.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    pub records: Vec<EpochRecord>,
    pub summary: TrainSummary,
    pub data_hashes: DataHashes,
}

/// Train on in-memory data without writing anything.
pub fn train_on(cfg: &RunConfig, data: &TaskData, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    let model = cfg.model.build(data.input_dim(), data.out_dim(), cfg.seed)?;
    let mut trainer = Trainer::new(model, cfg.train_config())?;
    let records = trainer.fit(&data.train, Some(&data.val), &mut on_epoch)?;
    let summary = summarize(&trainer, &records, data)?;
    Ok(TrainOutcome {
        trainer,
        records,
        summary,
        data_hashes: data.hashes(),
    })
}

fn summarize(trainer: &Trainer, records: &[EpochRecord], data: &TaskData) -> Result<TrainSummary> {
    let loss = trainer.cfg.loss_kind()?;
    let policy = trainer.cfg.reset_policy;
    let trained = trainer.epoch > 0;
    let final_val = records.iter().rev().find(|r| r.split == "val").map(|r| r.report.without_timing());
    let test = if trained {
        Some(evaluate(&trainer.model, &data.test, policy, loss)?.without_timing())
    } else {
        None
    };
    let persistence_test = if data.target_features.is_empty() {
        None
    } else {
        Some(persistence_baseline(&data.test, &data.target_features)?)
    };
    Ok(TrainSummary {
        epochs_completed: trainer.epoch,
        final_val,
        test,
        persistence_test,
        reset_policy: policy,
    })
}

/// `train`: metrics CSV, final checkpoint, summary and manifest under `out_dir`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let data = build_data(&cfg.task, cfg.seed)?;
    let outcome = train_on(cfg, &data, |r| {
        log::info!(
            "epoch {:>3} {:<5} loss {:.6} mse {:.6}{}",
            r.epoch,
            r.split,
            r.report.loss,
            r.report.mse,
            r.report.accuracy.map(|a| format!(" acc {a:.4}")).unwrap_or_default()
        )
    })?;
    let out = &cfg.out_dir;
    write_atomic(&out.join(METRICS_FILE), metrics_csv(&outcome.records).as_bytes())?;
    outcome.trainer.to_checkpoint(cfg.to_value()).save(&out.join(CHECKPOINT_FILE))?;
    write_json(&out.join(SUMMARY_FILE), &outcome.summary)?;
    let manifest = Manifest {
        config: cfg.to_value(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        data: outcome.data_hashes.clone(),
        model_kind: outcome.trainer.model.kind(),
        param_count: outcome.trainer.model.param_count(),
        epochs_completed: outcome.trainer.epoch,
        outputs: [METRICS_FILE, CHECKPOINT_FILE, SUMMARY_FILE].map(String::from).to_vec(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDoc {
    pub split: String,
    pub metrics: MetricsReport,
    pub config_hash: String,
    pub reset_policy: ResetPolicy,
    /// Whether mse/mae are in z-scored units.
    pub normalized: bool,
    pub checkpoint_epoch: usize,
}

/// `eval`: metrics of a checkpointed model on one split of the configured data.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, split: &str) -> Result<EvalDoc> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = Model::from_doc(&ck.model)?;
    let data = build_data(&cfg.task, cfg.seed)?;
    let batch = data.split(split)?;
    check_model_fits(&model, &data)?;
    let metrics = evaluate(&model, batch, cfg.train.reset_policy, cfg.train.loss_kind()?)?;
    let doc = EvalDoc {
        split: split.to_string(),
        normalized: metrics.normalized,
        metrics,
        config_hash: cfg.hash(),
        reset_policy: cfg.train.reset_policy,
        checkpoint_epoch: ck.epoch,
    };
    write_json(&cfg.out_dir.join(EVAL_FILE), &doc)?;
    Ok(doc)
}

fn check_model_fits(model: &Model, data: &TaskData) -> Result<()> {
    if model.input_dim() != data.input_dim() || model.out_dim() != data.out_dim() {
        return Err(Error::Config(format!(
            "checkpoint model maps {} → {} but the configured task needs {} → {}",
            model.input_dim(),
            model.out_dim(),
            data.input_dim(),
            data.out_dim()
        )));
    }
    Ok(())
}

/// `trace`: per-step T, C, S and m for sequence `index` of the test split.
pub fn cmd_trace(cfg: &RunConfig, checkpoint: &Path, index: usize) -> Result<PathBuf> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = Model::from_doc(&ck.model)?;
    let data = build_data(&cfg.task, cfg.seed)?;
    check_model_fits(&model, &data)?;
    if index >= data.test.len() {
        return Err(Error::Config(format!("sequence index {index} out of range ({} test sequences)", data.test.len())));
    }
    let path = cfg.out_dir.join(TRACE_FILE);
    export_trace(&model, &data.test.sequence(index), &path)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchDoc {
    pub efficiency: EfficiencyReport,
    pub model_kind: ModelKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Measured forward time per step; varies between machines and runs.
    pub forward_ns_per_step: f64,
    pub repeats: usize,
}

/// `bench`: parameter and FLOP accounting plus a measured forward time.
pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchDoc> {
    let data = build_data(&cfg.task, cfg.seed)?;
    let model = cfg.model.build(data.input_dim(), data.out_dim(), cfg.seed)?;
    let seq = data.test.sequence(0);
    let efficiency = efficiency_report(&model, seq.len());
    let repeats = 20;
    let init = crate::cell::CellState::zeros(model.hidden_dim());
    let start = Instant::now();
    for _ in 0..repeats {
        std::hint::black_box(crate::train::forward_sequence(&model, &seq, &init)?);
    }
    let elapsed = start.elapsed().as_nanos() as f64;
    let doc = BenchDoc {
        efficiency,
        model_kind: model.kind(),
        input_dim: model.input_dim(),
        hidden_dim: model.hidden_dim(),
        forward_ns_per_step: elapsed / (repeats * seq.len()) as f64,
        repeats,
    };
    write_json(&cfg.out_dir.join(BENCH_FILE), &doc)?;
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckDoc {
    pub report: GradcheckReport,
    pub tolerance: f64,
    pub passed: bool,
}

/// `gradcheck`: finite-difference check of a small model with the configured
/// cell and the task's input width.
pub fn cmd_gradcheck(cfg: &RunConfig, sabotage: bool) -> Result<GradcheckDoc> {
    let input_dim = task_input_dim(&cfg.task)?;
    if input_dim > 8 {
        return Err(Error::Config(format!("gradcheck needs input_dim ≤ 8, task has {input_dim}")));
    }
    let mut small = cfg.model;
    small.hidden_dim = cfg.gradcheck.hidden_dim;
    small.init = InitScheme::GlorotUniform;
    let model = small.build(input_dim, 2, cfg.seed)?;
    let opts = GradcheckOptions {
        sabotage,
        switch_margin: cfg.gradcheck.switch_margin,
        ..GradcheckOptions::default()
    };
    let report = gradcheck(&model, cfg.gradcheck.seq_len, &mut Rng::fork(cfg.seed, GRADCHECK_STREAM), &opts)?;
    let doc = GradcheckDoc {
        passed: report.passes(cfg.gradcheck.tolerance),
        tolerance: cfg.gradcheck.tolerance,
        report,
    };
    write_json(&cfg.out_dir.join(GRADCHECK_FILE), &doc)?;
    Ok(doc)
}

/// Input width implied by a task, without generating its data where avoidable.
pub fn task_input_dim(task: &TaskConfig) -> Result<usize> {
    Ok(match task {
        TaskConfig::Adding { .. } => 2,
        TaskConfig::Recall { classes, .. } => 2 * classes + 1,
        TaskConfig::Forecast { source, .. } => match source {
            SeriesSource::Synthetic(c) => c.features,
            SeriesSource::Csv { path } => load_csv_series(path)?.features(),
        },
    })
}

/// One sub-run of an ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    /// `variant` or `policy`.
    pub group: String,
    pub name: String,
    pub status: String,
    pub error: Option<String>,
    pub epochs_completed: usize,
    pub test: Option<MetricsReport>,
    pub data_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationDoc {
    pub config_hash: String,
    pub data: DataHashes,
    pub runs: Vec<AblationRun>,
}

impl AblationDoc {
    pub fn all_ok(&self) -> bool {
        self.runs.iter().all(|r| r.status == "ok")
    }
}

/// The eight sub-configurations of an ablation: four update variants under
/// the configured reset policy, then four reset policies under the configured
/// update variant.
pub fn ablation_plan(cfg: &RunConfig) -> Vec<(String, String, RunConfig)> {
    let mut plan = Vec::new();
    for v in UpdateVariant::ALL {
        let mut c = cfg.clone();
        c.model.kind = ModelArch::Petnn;
        c.model.update_variant = v;
        plan.push(("variant".to_string(), v.name().to_string(), c));
    }
    for p in ResetPolicy::ALL {
        let mut c = cfg.clone();
        c.model.kind = ModelArch::Petnn;
        c.train.reset_policy = p;
        plan.push(("policy".to_string(), p.label(), c));
    }
    plan
}

/// Worker count: `PETNN_THREADS` if set, otherwise the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var("PETNN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// `ablate`: every sub-run trains on the same data; their per-epoch curves go
/// to one CSV. A failing sub-run is recorded and the others continue.
pub fn cmd_ablate(cfg: &RunConfig, threads: usize) -> Result<AblationDoc> {
    let data = build_data(&cfg.task, cfg.seed)?;
    let hashes = data.hashes();
    let plan = ablation_plan(cfg);
    let results: Mutex<Vec<Option<(AblationRun, Vec<EpochRecord>)>>> = Mutex::new(vec![None; plan.len()]);
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, plan.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((group, name, sub)) = plan.get(i) else { break };
                let outcome = train_on(sub, &data, |_| {});
                let entry = match outcome {
                    Ok(o) => {
                        let run = AblationRun {
                            group: group.clone(),
                            name: name.clone(),
                            status: "ok".into(),
                            error: None,
                            epochs_completed: o.trainer.epoch,
                            test: o.summary.test,
                            data_hash: o.data_hashes.train,
                        };
                        (run, o.records)
                    }
                    Err(e) => {
                        log::warn!("ablation run {group}/{name} failed: {e}");
                        let run = AblationRun {
                            group: group.clone(),
                            name: name.clone(),
                            status: "failed".into(),
                            error: Some(e.to_string()),
                            epochs_completed: 0,
                            test: None,
                            data_hash: hashes.train.clone(),
                        };
                        (run, Vec::new())
                    }
                };
                results.lock().expect("no worker panics while holding the lock")[i] = Some(entry);
            });
        }
    });
    let results: Vec<(AblationRun, Vec<EpochRecord>)> = results
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every planned run finished"))
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(["group", "name", "epoch", "split", "loss", "mse", "mae", "accuracy", "data_hash"])
        .map_err(csv_err)?;
    for (run, records) in &results {
        for r in records {
            let m = &r.report;
            w.write_record([
                run.group.clone(),
                run.name.clone(),
                r.epoch.to_string(),
                r.split.to_string(),
                m.loss.to_string(),
                m.mse.to_string(),
                m.mae.to_string(),
                m.accuracy.map(|a| a.to_string()).unwrap_or_default(),
                run.data_hash.clone(),
            ])
            .map_err(csv_err)?;
        }
    }
    let csv = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    write_atomic(&cfg.out_dir.join(ABLATION_FILE), &csv)?;
    let doc = AblationDoc {
        config_hash: cfg.hash(),
        data: hashes,
        runs: results.into_iter().map(|(r, _)| r).collect(),
    };
    write_json(&cfg.out_dir.join(ABLATION_SUMMARY_FILE), &doc)?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Parameters;

    const ADDING: &str = r#"{"seed": 3, "task": {"kind": "adding", "length": 10, "n_train": 8, "n_val": 4, "n_test": 4},
        "model": {"hidden_dim": 4}, "train": {"epochs": 1, "batch_size": 4}}"#;

    #[test]
    fn config_defaults_and_resolution() {
        let cfg = RunConfig::from_json(ADDING).unwrap();
        assert_eq!(cfg.train.seed, 3);
        assert_eq!(cfg.train.loss, Some(LossKind::Mse));
        assert_eq!(cfg.model.update_variant, UpdateVariant::SelfSelective);
        assert_eq!(cfg.train.reset_policy, ResetPolicy::RESET);
        let default_hidden: RunConfig =
            RunConfig::from_json(r#"{"task": {"kind": "adding", "length": 4, "n_train": 1, "n_val": 1, "n_test": 1}}"#).unwrap();
        assert_eq!(default_hidden.model.hidden_dim, 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        for bad in [
            r#"{"task": {"kind": "adding", "length": 4, "n_train": 1, "n_val": 1, "n_test": 1}, "extra": 1}"#,
            r#"{"task": {"kind": "adding", "length": 4, "n_train": 1, "n_val": 1, "n_test": 1, "extra": 1}}"#,
            r#"{"task": {"kind": "adding", "length": 4, "n_train": 1, "n_val": 1, "n_test": 1}, "model": {"hidden": 3}}"#,
            r#"{"task": {"kind": "adding", "length": 4, "n_train": 1, "n_val": 1, "n_test": 1}, "train": {"lr": 3}}"#,
            r#"{"task": {"kind": "nope"}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn loss_must_match_task() {
        let bad = r#"{"task": {"kind": "adding", "length": 4, "n_train": 1, "n_val": 1, "n_test": 1}, "train": {"loss": "cross_entropy"}}"#;
        assert!(RunConfig::from_json(bad).is_err());
    }

    #[test]
    fn data_is_seeded_per_split() {
        let cfg = RunConfig::from_json(ADDING).unwrap();
        let a = build_data(&cfg.task, 3).unwrap();
        let b = build_data(&cfg.task, 3).unwrap();
        assert_eq!(a.hashes(), b.hashes());
        assert_ne!(a.hashes().train, a.hashes().val);
        assert_ne!(build_data(&cfg.task, 4).unwrap().hashes(), a.hashes());
    }

    #[test]
    fn update_gate_bias_lands_on_the_variant_gate() {
        let bias_of = |variant: UpdateVariant, name: &str| {
            let mut m = ModelConfig {
                hidden_dim: 3,
                update_variant: variant,
                update_gate_bias: -2.0,
                ..ModelConfig::default()
            };
            m.init = InitScheme::GlorotUniform;
            let model = m.build(2, 1, 0).unwrap();
            let b = model.blocks().into_iter().find(|b| b.name == name).unwrap().data.to_vec();
            b
        };
        assert_eq!(bias_of(UpdateVariant::SelfSelective, "b_zw"), vec![-2.0; 3]);
        assert_eq!(bias_of(UpdateVariant::ExpGating, "b_g"), vec![-2.0; 3]);
        assert_eq!(bias_of(UpdateVariant::ExpGating, "b_zw"), vec![0.0; 3]);
        assert_eq!(bias_of(UpdateVariant::TraditionalGating, "b_u"), vec![-2.0; 3]);
        assert_eq!(bias_of(UpdateVariant::TraditionalGating, "b_f"), vec![2.0; 3]);
        assert_eq!(bias_of(UpdateVariant::QuasiLinear, "b_zw"), vec![0.0; 3]);
    }

    #[test]
    fn ablation_plan_has_four_of_each() {
        let cfg = RunConfig::from_json(ADDING).unwrap();
        let plan = ablation_plan(&cfg);
        assert_eq!(plan.iter().filter(|p| p.0 == "variant").count(), 4);
        assert_eq!(plan.iter().filter(|p| p.0 == "policy").count(), 4);
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = RunConfig::from_json(ADDING).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
    }
}
