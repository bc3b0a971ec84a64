//! Synthetic corpus with planted lexical cues.
//!
//! Each task label is drawn from a per-task class distribution. Sarcasm and
//! metaphor labels are coupled to the subtext label: with probability `q`
//! they reuse the subtext draw's uniform variate (comonotone coupling),
//! otherwise they use a fresh one. Both branches have the right marginal, so
//! class frequencies are untouched and the Pearson correlation with subtext
//! is `q` times the comonotone maximum; `q` is solved for the requested
//! correlation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::corpus::LabeledExample;
use crate::error::{Error, Result};
use crate::seed;
use crate::task::{Label, Task};

/// Class probabilities in label order (-1, 0, 1).
pub type ClassProbs = [f64; 3];

/// Default per-task class distribution: mostly negative, a thin unsure band,
/// and a minority positive class (heavier for subtext than for sarcasm and
/// metaphor).
pub const DEFAULT_IMBALANCE: [ClassProbs; 3] = [[0.60, 0.10, 0.30], [0.80, 0.05, 0.15], [0.78, 0.06, 0.16]];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n: usize,
    /// Class probabilities per task, indexed subtext, sarcasm, metaphor.
    pub imbalance: [ClassProbs; 3],
    /// Probability that a task's cue token is planted.
    pub cue_strength: f64,
    /// Number of distinct filler tokens.
    pub vocab_size: usize,
    /// Target Pearson correlation of sarcasm and metaphor labels with subtext.
    pub correlation: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 2000,
            imbalance: DEFAULT_IMBALANCE,
            cue_strength: 0.9,
            vocab_size: 300,
            correlation: 0.5,
            min_len: 6,
            max_len: 14,
            seed: 100_000,
        }
    }
}

/// The token planted for `label` on `task`.
pub fn cue_token(task: Task, label: Label) -> String {
    let tag = match label {
        Label::Negative => "neg",
        Label::Unsure => "unsure",
        Label::Positive => "pos",
    };
    format!("cue_{}_{}", task.name(), tag)
}

pub fn filler_token(i: usize) -> String {
    format!("w{i}")
}

fn validate_probs(task: Task, p: &ClassProbs) -> Result<()> {
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{task} class probabilities {p:?} must be in [0,1] and sum to 1")));
    }
    Ok(())
}

fn inverse_cdf(p: &ClassProbs, u: f64) -> Label {
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return Label::ALL[i];
        }
    }
    // u within rounding of 1: the last class with positive mass
    let last = p.iter().rposition(|&x| x > 0.0).unwrap_or(2);
    Label::ALL[last]
}

fn moments(p: &ClassProbs) -> (f64, f64) {
    let mean: f64 = Label::ALL.iter().zip(p).map(|(l, pi)| l.value() as f64 * pi).sum();
    let var: f64 = Label::ALL.iter().zip(p).map(|(l, pi)| (l.value() as f64 - mean).powi(2) * pi).sum();
    (mean, var)
}

/// Pearson correlation of two label variables under the comonotone coupling.
/// `None` when either marginal is degenerate.
pub fn max_correlation(p: &ClassProbs, q: &ClassProbs) -> Option<f64> {
    let (mp, vp) = moments(p);
    let (mq, vq) = moments(q);
    if vp <= 0.0 || vq <= 0.0 {
        return None;
    }
    // merge the two CDF breakpoint lists and integrate F_p^-1(u) F_q^-1(u)
    let mut cuts: Vec<f64> = Vec::with_capacity(8);
    let (mut a, mut b) = (0.0, 0.0);
    for i in 0..3 {
        a += p[i];
        b += q[i];
        cuts.push(a.min(1.0));
        cuts.push(b.min(1.0));
    }
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    let mut exy = 0.0;
    for w in cuts.windows(2) {
        let width = w[1] - w[0];
        if width <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        exy += width * inverse_cdf(p, mid).value() as f64 * inverse_cdf(q, mid).value() as f64;
    }
    Some((exy - mp * mq) / (vp * vq).sqrt())
}

pub fn generate_synthetic_corpus(cfg: &SyntheticConfig) -> Result<Vec<LabeledExample>> {
    for task in Task::ALL {
        validate_probs(task, &cfg.imbalance[task.index()])?;
    }
    if !(0.0..=1.0).contains(&cfg.cue_strength) {
        return Err(Error::invalid(format!("cue_strength {} outside [0,1]", cfg.cue_strength)));
    }
    if !(0.0..=1.0).contains(&cfg.correlation) {
        return Err(Error::invalid(format!("correlation {} outside [0,1]", cfg.correlation)));
    }
    if cfg.vocab_size == 0 || cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::invalid("need vocab_size >= 1 and 1 <= min_len <= max_len"));
    }

    let sub = &cfg.imbalance[Task::Subtext.index()];
    let mut coupling = [0.0; 3];
    for task in [Task::Sarcasm, Task::Metaphor] {
        let q = match max_correlation(sub, &cfg.imbalance[task.index()]) {
            None => 0.0,
            Some(max) if cfg.correlation <= max + 1e-12 => (cfg.correlation / max).min(1.0),
            Some(max) => {
                return Err(Error::invalid(format!(
                    "correlation {} unattainable for {task}: class distributions allow at most {max:.4}",
                    cfg.correlation
                )))
            }
        };
        coupling[task.index()] = q;
    }

    let mut rng = seed::rng(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let u_sub: f64 = rng.gen();
        let mut labels = [Label::Unsure; 3];
        labels[0] = inverse_cdf(sub, u_sub);
        for task in [Task::Sarcasm, Task::Metaphor] {
            let coupled = rng.gen::<f64>() < coupling[task.index()];
            let fresh: f64 = rng.gen();
            let u = if coupled { u_sub } else { fresh };
            labels[task.index()] = inverse_cdf(&cfg.imbalance[task.index()], u);
        }

        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let mut tokens: Vec<String> = (0..len).map(|_| filler_token(rng.gen_range(0..cfg.vocab_size))).collect();
        for task in Task::ALL {
            let plant = rng.gen::<f64>() < cfg.cue_strength;
            let pos = rng.gen_range(0..=tokens.len());
            if plant {
                tokens.insert(pos, cue_token(task, labels[task.index()]));
            }
        }

        let mut ex = LabeledExample::new(format!("syn-{i}"), tokens.join(" "), labels);
        ex.exaggeration = Label::Negative;
        ex.homophonic = Label::Negative;
        ex.other = Label::Negative;
        out.push(ex);
    }
    Ok(out)
}

/// Sample Pearson correlation between two tasks' label values.
pub fn label_correlation(examples: &[LabeledExample], a: Task, b: Task) -> f64 {
    let n = examples.len() as f64;
    let xs: Vec<f64> = examples.iter().map(|e| e.label(a).value() as f64).collect();
    let ys: Vec<f64> = examples.iter().map(|e| e.label(b).value() as f64).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
