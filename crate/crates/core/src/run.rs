//! Run configuration and the command implementations behind the CLI.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotation::{simulate_reliability, ReliabilityCurve, SimulationConfig};
use crate::data::{generate_synthetic_corpus, load_corpus, stratified_split, write_corpus, ClassProbs, SyntheticConfig};
use crate::error::{Error, Result};
use crate::evaluation::{bow_baseline, gbp_report, AggregateReport, BowKind, MetricsReport};
use crate::model::{Model, ModelConfig, Variant};
use crate::numerics::GradCheck;
use crate::seed;
use crate::task::Task;
use crate::training::{cross_validate, evaluate, fit, toy_gradient_check, ToyDims, TrainConfig, TrainHistory, VocabOptions};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GBP_TRIALS: usize = 100;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BASELINES_FILE: &str = "baselines.csv";
pub const CV_FILE: &str = "cv.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything a train, eval or cv run needs. Loaded from TOML; command-line
/// flags override individual fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub variant: Variant,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub vocab: VocabOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            embeddings: None,
            variant: Variant::Sasicm,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            vocab: VocabOptions::default(),
        }
    }
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub variant: Option<Variant>,
    pub tasks: Option<Vec<Task>>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn with_overrides(mut self, o: Overrides) -> Self {
        if o.corpus.is_some() {
            self.corpus = o.corpus;
        }
        if o.embeddings.is_some() {
            self.embeddings = o.embeddings;
        }
        if let Some(v) = o.variant {
            self.variant = v;
        }
        if let Some(t) = o.tasks {
            self.model.tasks = t;
        }
        if let Some(s) = o.seed {
            self.train.seed = s;
        }
        self
    }

    /// The model config after applying the variant switches.
    pub fn model_config(&self) -> ModelConfig {
        self.variant.apply(&self.model)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.train.validate()?;
        if self.vocab.min_count == 0 {
            return Err(Error::Config("vocab.min_count must be >= 1".into()));
        }
        Ok(())
    }

    fn corpus_path(&self) -> Result<&Path> {
        self.corpus.as_deref().ok_or_else(|| Error::Data("no corpus given".into()))
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    model: ModelConfig,
    examples: usize,
    outputs: &'a [&'a str],
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_manifest(dir: &Path, command: &str, rc: &RunConfig, examples: usize, outputs: &[&str]) -> Result<()> {
    let m = Manifest { command, version: VERSION, seed: rc.train.seed, config: rc, model: rc.model_config(), examples, outputs };
    write_file(&dir.join(MANIFEST_FILE), &(serde_json::to_string_pretty(&m)? + "\n"))
}

pub fn data_gen(cfg: &SyntheticConfig, out: &Path) -> Result<usize> {
    let corpus = generate_synthetic_corpus(cfg)?;
    write_corpus(out, &corpus)?;
    Ok(corpus.len())
}

/// Parses `a,b,c` (one distribution for every task) or `a,b,c;d,e,f;g,h,i`
/// (subtext, sarcasm, metaphor).
pub fn parse_imbalance(s: &str) -> Result<[ClassProbs; 3]> {
    let triples: Vec<ClassProbs> = s
        .split(';')
        .map(|part| {
            let v: Vec<f64> = part
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| Error::invalid(format!("imbalance value '{x}': {e}"))))
                .collect::<Result<_>>()?;
            <[f64; 3]>::try_from(v).map_err(|v| Error::invalid(format!("imbalance needs 3 probabilities per task, got {}", v.len())))
        })
        .collect::<Result<_>>()?;
    match triples.len() {
        1 => Ok([triples[0]; 3]),
        3 => Ok([triples[0], triples[1], triples[2]]),
        n => Err(Error::invalid(format!("imbalance needs 1 or 3 distributions, got {n}"))),
    }
}

pub struct TrainSummary {
    pub model: Model,
    pub history: TrainHistory,
    pub test: MetricsReport,
}

/// Stratified train/val/test split, early-stopped training, then test-split
/// metrics for the model and the GBP, naive Bayes and logistic-regression
/// baselines.
pub fn train_cmd(rc: &RunConfig, out_dir: &Path) -> Result<TrainSummary> {
    rc.validate()?;
    let corpus = load_corpus(rc.corpus_path()?)?;
    let tc = &rc.train;
    let split = stratified_split(&corpus, tc.test_fraction, tc.val_fraction, tc.seed)?;
    let config = rc.model_config();
    let (model, history) = fit(&config, &rc.vocab, &split.train, &split.val, tc, rc.embeddings.as_deref())?;
    let test = evaluate(&model, &split.test)?;
    let tasks = &config.tasks;
    let mut baselines = String::from("model,");
    baselines.push_str(MetricsReport::CSV_HEADER);
    baselines.push('\n');
    let rows = [
        ("sasicm", test.clone()),
        ("gbp", gbp_report(&split.train, &split.test, tasks, seed::derive(tc.seed, &[5]), GBP_TRIALS)?),
        ("naive-bayes", bow_baseline(BowKind::NaiveBayes, &split.train, &split.test, tasks, rc.vocab.tokenizer)?),
        ("logistic-regression", bow_baseline(BowKind::LogisticRegression, &split.train, &split.test, tasks, rc.vocab.tokenizer)?),
    ];
    for (name, report) in &rows {
        for line in report.to_csv().lines().skip(1) {
            baselines.push_str(&format!("{name},{line}\n"));
        }
    }
    prepare_dir(out_dir)?;
    model.save(out_dir.join(CHECKPOINT_FILE))?;
    write_file(&out_dir.join(HISTORY_FILE), &history.to_csv())?;
    write_file(&out_dir.join(METRICS_FILE), &test.to_csv())?;
    write_file(&out_dir.join(BASELINES_FILE), &baselines)?;
    write_manifest(out_dir, "train", rc, corpus.len(), &[CHECKPOINT_FILE, HISTORY_FILE, METRICS_FILE, BASELINES_FILE])?;
    Ok(TrainSummary { model, history, test })
}

/// Scores a saved checkpoint on the whole corpus, restricted to `tasks`
/// when the override names a subset of the model's tasks.
pub fn eval_cmd(rc: &RunConfig, checkpoint: &Path, tasks: Option<&[Task]>, out_dir: &Path) -> Result<MetricsReport> {
    let model = Model::load(checkpoint)?;
    let corpus = load_corpus(rc.corpus_path()?)?;
    let mut report = evaluate(&model, &corpus)?;
    if let Some(tasks) = tasks {
        if let Some(t) = tasks.iter().find(|t| !model.config.tasks.contains(t)) {
            return Err(Error::Config(format!("checkpoint has no head for task {t}")));
        }
        report.tasks.retain(|t, _| tasks.contains(t));
    }
    prepare_dir(out_dir)?;
    write_file(&out_dir.join(METRICS_FILE), &report.to_csv())?;
    let rc = RunConfig { model: model.config.clone(), ..rc.clone() };
    write_manifest(out_dir, "eval", &rc, corpus.len(), &[METRICS_FILE])?;
    Ok(report)
}

pub fn cv_cmd(rc: &RunConfig, out_dir: &Path) -> Result<AggregateReport> {
    rc.validate()?;
    let corpus = load_corpus(rc.corpus_path()?)?;
    let report = cross_validate(&corpus, &rc.model_config(), &rc.vocab, &rc.train)?;
    prepare_dir(out_dir)?;
    write_file(&out_dir.join(CV_FILE), &report.to_csv())?;
    write_manifest(out_dir, "cv", rc, corpus.len(), &[CV_FILE])?;
    Ok(report)
}

/// One curve per positive rate, concatenated. Rate `k` simulates with a seed
/// derived from `(seed, k)`.
pub fn simulate_tae(pos_rates: &[f64], grid: &[f64], n_items: usize, seed_value: u64) -> Result<ReliabilityCurve> {
    if pos_rates.is_empty() {
        return Err(Error::invalid("need at least one positive rate"));
    }
    let mut rows = Vec::new();
    for (k, &p) in pos_rates.iter().enumerate() {
        let cfg = SimulationConfig::new(p, grid.to_vec(), n_items, seed::derive(seed_value, &[k as u64]));
        rows.extend(simulate_reliability(&cfg)?.rows);
    }
    Ok(ReliabilityCurve { rows })
}

/// Parses `L,d_e,d_h` or `LxD_exD_h`.
pub fn parse_dims(s: &str) -> Result<ToyDims> {
    let v: Vec<usize> = s
        .split([',', 'x'])
        .map(|x| x.trim().parse::<usize>().map_err(|e| Error::Config(format!("dims value '{x}': {e}"))))
        .collect::<Result<_>>()?;
    match v[..] {
        [length, d_e, d_h] => Ok(ToyDims { length, d_e, d_h }),
        _ => Err(Error::Config(format!("dims need three values L,d_e,d_h, got '{s}'"))),
    }
}

pub fn gradcheck_cmd(dims: ToyDims, seed_value: u64) -> Result<GradCheck> {
    toy_gradient_check(dims, &ModelConfig::default(), seed_value)
}

/// Process exit status for an error: 2 configuration, 3 data, 4 numeric.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::Data(_) | Error::Parse { .. } | Error::Io { .. } | Error::Json(_) => 3,
        Error::NumericAbort { .. } | Error::NonFinite { .. } => 4,
        Error::Shape { .. } | Error::NonDeterministic { .. } => 1,
    }
}
