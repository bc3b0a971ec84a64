//! Reference classifiers: guess-by-probability and bag-of-words models.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, MetricsReport, TaskMetrics};
use crate::data::{tokenize, LabeledExample, TokenizerMode};
use crate::error::{Error, Result};
use crate::seed;
use crate::task::{Label, Task};

/// Class frequencies in label order (-1, 0, 1).
pub fn label_distribution(labels: &[Label]) -> [f64; 3] {
    let mut p = [0.0; 3];
    labels.iter().for_each(|l| p[l.class_index()] += 1.0);
    p.iter_mut().for_each(|v| *v /= labels.len().max(1) as f64);
    p
}

/// Predicts by sampling the training label distribution, `trials` times.
/// Scalar metrics are averaged over trials; the confusion matrix sums them.
pub fn gbp_baseline(train_labels: &[Label], test_gold: &[Label], seed_value: u64, trials: usize) -> Result<TaskMetrics> {
    if trials == 0 {
        return Err(Error::invalid("GBP needs at least one trial"));
    }
    if train_labels.is_empty() {
        return Err(Error::Data("GBP needs training labels".into()));
    }
    let p = label_distribution(train_labels);
    let mut rng = seed::rng(seed_value);
    let mut acc: Option<TaskMetrics> = None;
    for _ in 0..trials {
        let pred: Vec<Label> = test_gold
            .iter()
            .map(|_| {
                let u: f64 = rng.gen();
                let mut cum = 0.0;
                let mut pick = p.iter().rposition(|&x| x > 0.0).unwrap_or(0);
                for (i, &pi) in p.iter().enumerate() {
                    cum += pi;
                    if u < cum {
                        pick = i;
                        break;
                    }
                }
                Label::ALL[pick]
            })
            .collect();
        let m = compute_metrics(&pred, test_gold)?;
        acc = Some(match acc {
            None => m,
            Some(mut a) => {
                a.precision += m.precision;
                a.recall += m.recall;
                a.f1 += m.f1;
                a.accuracy += m.accuracy;
                for g in 0..3 {
                    for q in 0..3 {
                        a.confusion[g][q] += m.confusion[g][q];
                    }
                }
                a
            }
        });
    }
    let mut m = acc.expect("trials >= 1");
    let k = trials as f64;
    m.precision /= k;
    m.recall /= k;
    m.f1 /= k;
    m.accuracy /= k;
    Ok(m)
}

pub fn gbp_report(train: &[LabeledExample], test: &[LabeledExample], tasks: &[Task], seed_value: u64, trials: usize) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    for &task in tasks {
        let tr: Vec<Label> = train.iter().map(|e| e.label(task)).collect();
        let te: Vec<Label> = test.iter().map(|e| e.label(task)).collect();
        report.tasks.insert(task, gbp_baseline(&tr, &te, seed::derive(seed_value, &[task.index() as u64]), trials)?);
    }
    Ok(report)
}

/// Token-index map over the training documents.
#[derive(Clone, Debug, Default)]
pub struct BowVocab {
    index: HashMap<String, usize>,
}

impl BowVocab {
    pub fn build(docs: &[Vec<String>]) -> Self {
        let mut index = HashMap::new();
        let mut tokens: Vec<&String> = docs.iter().flatten().collect();
        tokens.sort();
        tokens.dedup();
        for t in tokens {
            let n = index.len();
            index.insert(t.clone(), n);
        }
        BowVocab { index }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Sparse counts of known tokens, sorted by index.
    pub fn counts(&self, doc: &[String]) -> Vec<(usize, f64)> {
        let mut m: BTreeMap<usize, f64> = BTreeMap::new();
        for t in doc {
            if let Some(&i) = self.index.get(t) {
                *m.entry(i).or_default() += 1.0;
            }
        }
        m.into_iter().collect()
    }
}

fn argmax(scores: &[f64; 3]) -> Label {
    let best = (0..3).fold(0, |b, j| if scores[j] > scores[b] { j } else { b });
    Label::ALL[best]
}

/// Multinomial naive Bayes with add-one smoothing.
#[derive(Clone, Debug)]
pub struct NaiveBayes {
    vocab: BowVocab,
    log_prior: [f64; 3],
    /// `[class][token]` log-likelihoods.
    log_likelihood: Vec<Vec<f64>>,
}

impl NaiveBayes {
    pub fn fit(docs: &[Vec<String>], labels: &[Label]) -> Result<Self> {
        if docs.is_empty() || docs.len() != labels.len() {
            return Err(Error::Data(format!("naive Bayes needs matching nonempty data ({} docs, {} labels)", docs.len(), labels.len())));
        }
        let vocab = BowVocab::build(docs);
        let v = vocab.len();
        let mut counts = vec![vec![0.0; v]; 3];
        let mut class_n = [0.0; 3];
        for (doc, l) in docs.iter().zip(labels) {
            let c = l.class_index();
            class_n[c] += 1.0;
            for (i, n) in vocab.counts(doc) {
                counts[c][i] += n;
            }
        }
        let n = docs.len() as f64;
        let log_prior = class_n.map(|k| if k > 0.0 { (k / n).ln() } else { f64::NEG_INFINITY });
        let log_likelihood = counts
            .iter()
            .map(|row| {
                let total: f64 = row.iter().sum();
                row.iter().map(|&k| ((k + 1.0) / (total + v as f64)).ln()).collect()
            })
            .collect();
        Ok(NaiveBayes { vocab, log_prior, log_likelihood })
    }

    /// Unnormalised log posterior per class.
    pub fn log_scores(&self, doc: &[String]) -> [f64; 3] {
        let counts = self.vocab.counts(doc);
        std::array::from_fn(|c| self.log_prior[c] + counts.iter().map(|&(i, n)| n * self.log_likelihood[c][i]).sum::<f64>())
    }

    /// Normalised posterior; classes absent from training get 0.
    pub fn posterior(&self, doc: &[String]) -> [f64; 3] {
        let s = self.log_scores(doc);
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e = s.map(|v| (v - m).exp());
        let z: f64 = e.iter().sum();
        e.map(|v| v / z)
    }

    pub fn predict(&self, doc: &[String]) -> Label {
        argmax(&self.log_scores(doc))
    }
}

/// Multinomial logistic regression on token counts, full-batch gradient
/// descent from zero weights.
#[derive(Clone, Debug)]
pub struct LogisticRegression {
    vocab: BowVocab,
    weights: Vec<[f64; 3]>,
    bias: [f64; 3],
}

pub const LR_STEP: f64 = 0.5;
pub const LR_EPOCHS: usize = 300;

impl LogisticRegression {
    pub fn fit(docs: &[Vec<String>], labels: &[Label]) -> Result<Self> {
        Self::fit_with(docs, labels, LR_STEP, LR_EPOCHS)
    }

    pub fn fit_with(docs: &[Vec<String>], labels: &[Label], step: f64, epochs: usize) -> Result<Self> {
        if docs.is_empty() || docs.len() != labels.len() {
            return Err(Error::Data(format!("logistic regression needs matching nonempty data ({} docs, {} labels)", docs.len(), labels.len())));
        }
        let vocab = BowVocab::build(docs);
        let x: Vec<Vec<(usize, f64)>> = docs.iter().map(|d| vocab.counts(d)).collect();
        let mut model = LogisticRegression { weights: vec![[0.0; 3]; vocab.len()], bias: [0.0; 3], vocab };
        let n = docs.len() as f64;
        for _ in 0..epochs {
            let mut gw = vec![[0.0; 3]; model.weights.len()];
            let mut gb = [0.0; 3];
            for (xi, l) in x.iter().zip(labels) {
                let p = model.probs_sparse(xi);
                let y = l.one_hot();
                for c in 0..3 {
                    let d = (p[c] - y[c]) / n;
                    gb[c] += d;
                    for &(j, v) in xi {
                        gw[j][c] += d * v;
                    }
                }
            }
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                for c in 0..3 {
                    w[c] -= step * g[c];
                }
            }
            for c in 0..3 {
                model.bias[c] -= step * gb[c];
            }
        }
        Ok(model)
    }

    fn probs_sparse(&self, x: &[(usize, f64)]) -> [f64; 3] {
        let mut z = self.bias;
        for &(j, v) in x {
            for c in 0..3 {
                z[c] += self.weights[j][c] * v;
            }
        }
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e = z.map(|v| (v - m).exp());
        let s: f64 = e.iter().sum();
        e.map(|v| v / s)
    }

    pub fn probs(&self, doc: &[String]) -> [f64; 3] {
        self.probs_sparse(&self.vocab.counts(doc))
    }

    pub fn predict(&self, doc: &[String]) -> Label {
        argmax(&self.probs(doc))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BowKind {
    NaiveBayes,
    LogisticRegression,
}

/// Trains one bag-of-words classifier per task on `train` (vocabulary from
/// `train` only) and scores it on `test`.
pub fn bow_baseline(kind: BowKind, train: &[LabeledExample], test: &[LabeledExample], tasks: &[Task], tokenizer: TokenizerMode) -> Result<MetricsReport> {
    if train.is_empty() {
        return Err(Error::Data("bag-of-words baseline needs training data".into()));
    }
    let tr_docs: Vec<Vec<String>> = train.iter().map(|e| tokenize(&e.text, tokenizer)).collect();
    let te_docs: Vec<Vec<String>> = test.iter().map(|e| tokenize(&e.text, tokenizer)).collect();
    let mut report = MetricsReport::default();
    for &task in tasks {
        let labels: Vec<Label> = train.iter().map(|e| e.label(task)).collect();
        let gold: Vec<Label> = test.iter().map(|e| e.label(task)).collect();
        let pred: Vec<Label> = match kind {
            BowKind::NaiveBayes => {
                let nb = NaiveBayes::fit(&tr_docs, &labels)?;
                te_docs.iter().map(|d| nb.predict(d)).collect()
            }
            BowKind::LogisticRegression => {
                let lr = LogisticRegression::fit(&tr_docs, &labels)?;
                te_docs.iter().map(|d| lr.predict(d)).collect()
            }
        };
        report.tasks.insert(task, compute_metrics(&pred, &gold)?);
    }
    Ok(report)
}
