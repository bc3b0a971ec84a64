use rayon::prelude::*;

use super::train::{fit, TrainConfig, VocabOptions};
use crate::data::{kfold, stratified_split, LabeledExample};
use crate::error::Result;
use crate::evaluation::{compute_metrics, AggregateReport, MetricsReport};
use crate::model::{Model, ModelConfig};
use crate::seed;

/// Per-task metrics of `model` on labelled examples.
pub fn evaluate(model: &Model, examples: &[LabeledExample]) -> Result<MetricsReport> {
    let encoded = model.vocab.encode_all(examples);
    let preds = model.predict_labels(&encoded)?;
    let mut report = MetricsReport::default();
    for (k, &task) in model.config.tasks.iter().enumerate() {
        let gold: Vec<_> = examples.iter().map(|e| e.label(task)).collect();
        report.tasks.insert(task, compute_metrics(&preds[k], &gold)?);
    }
    Ok(report)
}

/// Repeated stratified k-fold. Repeat `r` partitions with a seed derived from
/// `(seed, r)`; each run trains with a seed derived from `(seed, r, fold)`,
/// holding out `val_fraction` of its training folds for early stopping.
/// Runs execute in parallel and are collected in (repeat, fold) order.
pub fn cross_validate(
    corpus: &[LabeledExample],
    config: &ModelConfig,
    vocab_opts: &VocabOptions,
    tc: &TrainConfig,
) -> Result<AggregateReport> {
    config.validate()?;
    tc.validate()?;
    let mut jobs = Vec::new();
    for r in 0..tc.repeats {
        for (f, fold) in kfold(corpus, tc.folds, seed::derive(tc.seed, &[r as u64]))?.into_iter().enumerate() {
            jobs.push((r, f, fold));
        }
    }
    let reports: Vec<(usize, MetricsReport)> = jobs
        .into_par_iter()
        .map(|(r, f, fold)| {
            let run_seed = seed::derive(tc.seed, &[r as u64, f as u64]);
            let split = stratified_split(&fold.train, 0.0, tc.val_fraction, run_seed)?;
            let run_tc = TrainConfig { seed: run_seed, ..tc.clone() };
            let (model, _) = fit(config, vocab_opts, &split.train, &split.val, &run_tc, None)?;
            Ok((r, evaluate(&model, &fold.test)?))
        })
        .collect::<Result<_>>()?;
    let mut by_repeat = vec![Vec::new(); tc.repeats];
    for (r, rep) in reports {
        by_repeat[r].push(rep);
    }
    AggregateReport::from_runs(&by_repeat)
}
