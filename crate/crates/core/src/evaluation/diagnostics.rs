//! Representation similarity and attention-map export.

use rand::seq::SliceRandom;

use crate::data::{tokenize, EncodedExample, UNK_ID};
use crate::error::{Error, Result};
use crate::model::{eval_output, Batch, Model};
use crate::seed;
use crate::task::Label;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean cosine over all unordered pairs. A zero vector has cosine 0 with
/// everything.
pub fn mean_pairwise_cosine(vectors: &[Vec<f64>]) -> Result<f64> {
    if vectors.len() < 2 {
        return Err(Error::invalid("pairwise similarity needs at least two vectors"));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            sum += cosine(&vectors[i], &vectors[j]);
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// The vectors the attention branch sees for `n` sampled vocabulary tokens,
/// each run alone as a one-token sentence.
pub fn attention_source_vectors(model: &Model, n: usize, seed_value: u64) -> Result<Vec<Vec<f64>>> {
    let candidates: Vec<usize> = (UNK_ID + 1..model.vocab.len()).collect();
    if n < 2 || n > candidates.len() {
        return Err(Error::invalid(format!("sample size {n} must be in 2..={}", candidates.len())));
    }
    let mut ids = candidates;
    ids.shuffle(&mut seed::rng(seed_value));
    ids.truncate(n);
    let width = model.fixing_length();
    let examples: Vec<EncodedExample> = ids
        .iter()
        .map(|&id| {
            let mut token_ids = vec![0; width];
            token_ids[0] = id;
            EncodedExample { token_ids, true_length: 1, labels: [Label::Unsure; 3] }
        })
        .collect();
    let out = eval_output(&model.config, &model.params, &Batch::new(&examples)?, &mut seed::rng(0))?;
    let src = &out.attention_input;
    let d = src.shape()[2];
    Ok((0..n).map(|b| src.data()[b * width * d..b * width * d + d].to_vec()).collect())
}

pub fn representation_similarity(model: &Model, n: usize, seed_value: u64) -> Result<f64> {
    mean_pairwise_cosine(&attention_source_vectors(model, n, seed_value)?)
}

/// Attention weights over the valid prefix of one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    pub tokens: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

impl AttentionMap {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("token");
        for t in &self.tokens {
            out.push(',');
            out.push_str(&csv_field(t));
        }
        out.push('\n');
        for (t, row) in self.tokens.iter().zip(&self.matrix) {
            out.push_str(&csv_field(t));
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub fn export_attention(model: &Model, text: &str) -> Result<AttentionMap> {
    let tokens = tokenize(text, model.vocab.tokenizer());
    if tokens.is_empty() {
        return Err(Error::invalid("text has no tokens"));
    }
    let (token_ids, len) = model.vocab.encode_tokens(&tokens);
    let ex = EncodedExample { token_ids, true_length: len, labels: [Label::Unsure; 3] };
    let out = eval_output(&model.config, &model.params, &Batch::new([&ex])?, &mut seed::rng(0))?;
    let matrix = (0..len).map(|i| (0..len).map(|j| out.attention.get(&[0, i, j])).collect()).collect();
    Ok(AttentionMap { tokens: tokens[..len].to_vec(), matrix })
}
