use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{multitask_loss, penalty_values, PenaltyValues};
use super::nadam::Nadam;
use crate::data::{load_embeddings, EncodedExample, LabeledExample, TokenizerMode, Vocabulary};
use crate::error::{Error, Result};
use crate::evaluation::compute_metrics;
use crate::model::{forward, predict_labels, Batch, Model, ModelConfig, ParameterStore, EVAL_CHUNK};
use crate::numerics::{Mode, Tape};
use crate::seed;
use crate::task::Task;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub repeats: usize,
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 100_000,
            max_epochs: 100,
            patience: 5,
            val_fraction: 0.2,
            test_fraction: 0.2,
            repeats: 5,
            folds: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size, patience and max_epochs must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning_rate {} must be finite and non-negative", self.learning_rate)));
        }
        for (name, f) in [("val_fraction", self.val_fraction), ("test_fraction", self.test_fraction)] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!("{name} {f} outside [0,1)")));
            }
        }
        if self.folds < 2 || self.repeats == 0 {
            return Err(Error::Config("need folds >= 2 and repeats >= 1".into()));
        }
        Ok(())
    }
}

/// How raw text becomes model input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabOptions {
    pub min_count: usize,
    pub tokenizer: TokenizerMode,
}

impl Default for VocabOptions {
    fn default() -> Self {
        VocabOptions { min_count: 1, tokenizer: TokenizerMode::CharCjk }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::EarlyStop => "early-stop",
            StopReason::MaxEpochs => "max-epochs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
    pub val_accuracy: f64,
    pub penalties: PenaltyValues,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_f1,val_accuracy,c_upper,c_lower,t_lower";

    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }

    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for e in &self.epochs {
            let p = &e.penalties;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                e.epoch, e.train_loss, e.val_f1, e.val_accuracy, p.c_upper, p.c_lower, p.t_lower
            );
        }
        let _ = writeln!(s, "# epochs_run={} best_epoch={} stop_reason={}", self.epochs_run(), self.best_epoch, self.stop_reason.name());
        s
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParameterStore,
    pub history: TrainHistory,
}

fn numeric(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::NonFinite { .. } => Error::NumericAbort { epoch, batch },
        other => other,
    }
}

/// Subtext weighted F1 and accuracy on `data`.
pub fn validation_score(config: &ModelConfig, params: &ParameterStore, data: &[EncodedExample]) -> Result<(f64, f64)> {
    let preds = predict_labels(config, params, data, EVAL_CHUNK)?;
    let k = config.task_position(Task::Subtext)?;
    let gold: Vec<_> = data.iter().map(|e| e.label(Task::Subtext)).collect();
    let m = compute_metrics(&preds[k], &gold)?;
    Ok((m.f1, m.accuracy))
}

/// Mini-batch Nadam with per-epoch seeded shuffling. Stops once the
/// validation subtext F1 has not improved for `patience` epochs and returns
/// the parameters of the best epoch.
pub fn train(
    config: &ModelConfig,
    init: ParameterStore,
    train: &[EncodedExample],
    val: &[EncodedExample],
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    tc.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data(format!("training needs nonempty train and validation sets ({} / {})", train.len(), val.len())));
    }
    let mut params = init;
    let mut opt = Nadam::new(tc.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = seed::rng(seed::derive(tc.seed, &[1]));
    let mut dropout_rng = seed::rng(seed::derive(tc.seed, &[2]));

    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, ParameterStore)> = None;
    let mut stale = 0;
    let mut stop_reason = StopReason::MaxEpochs;
    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(tc.batch_size).enumerate() {
            let batch = Batch::new(chunk.iter().map(|&i| &train[i]))?;
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape)?;
            let step = (|| {
                let fw = forward(&mut tape, &bound, &batch, config, Mode::Train, &mut dropout_rng)?;
                let targets: Vec<_> = config.tasks.iter().map(|&t| batch.targets(t)).collect();
                multitask_loss(&mut tape, &fw.probs, &targets, &bound, config)
            })()
            .map_err(|e| numeric(e, epoch, b))?;
            let value = tape.value(step.total).item();
            if !value.is_finite() {
                return Err(Error::NumericAbort { epoch, batch: b });
            }
            tape.backward(step.total)?;
            let grads = bound.grads(&tape);
            if grads.values().any(|g| !g.is_finite()) {
                return Err(Error::NumericAbort { epoch, batch: b });
            }
            opt.step(&mut params, &grads)?;
            loss_sum += value * batch.len() as f64;
        }

        let (val_f1, val_accuracy) = validation_score(config, &params, val)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_f1,
            val_accuracy,
            penalties: penalty_values(&params, config)?,
        });
        if best.as_ref().is_none_or(|(f, _, _)| val_f1 > *f) {
            best = Some((val_f1, epoch, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= tc.patience {
                stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome { params, history: TrainHistory { epochs, best_epoch, stop_reason } })
}

/// Builds the vocabulary from `train_set`, initialises (optionally from a
/// pretrained vector file) and trains.
pub fn fit(
    config: &ModelConfig,
    vocab_opts: &VocabOptions,
    train_set: &[LabeledExample],
    val_set: &[LabeledExample],
    tc: &TrainConfig,
    embeddings: Option<&Path>,
) -> Result<(Model, TrainHistory)> {
    if train_set.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let vocab = Vocabulary::from_examples(train_set, vocab_opts.min_count, vocab_opts.tokenizer)?;
    let table = match embeddings {
        Some(path) => Some(load_embeddings(path, config.d_e, &vocab, seed::derive(tc.seed, &[3]))?),
        None => None,
    };
    let model = Model::new(config.clone(), vocab, table, seed::derive(tc.seed, &[4]))?;
    let train_enc = model.vocab.encode_all(train_set);
    let val_enc = model.vocab.encode_all(val_set);
    let outcome = train(config, model.params, &train_enc, &val_enc, tc)?;
    Ok((Model { params: outcome.params, ..model }, outcome.history))
}
