use super::config::{AttentionSource, ModelConfig};
use super::layers::{feature_confusion, predict, recurrent_encode, strengthen_attention};
use super::params::{self, Bound};
use crate::data::{EncodedExample, PAD_ID};
use crate::error::{Error, Result};
use crate::numerics::{Mask, Mode, Tape, Tensor, Var};
use crate::seed::Rng;
use crate::task::{Label, Task};

/// A mini-batch in model layout: row-major ids `[B,L]` plus lengths and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub ids: Vec<usize>,
    pub lengths: Vec<usize>,
    pub labels: Vec<[Label; 3]>,
    pub width: usize,
}

impl Batch {
    pub fn new<'a>(examples: impl IntoIterator<Item = &'a EncodedExample>) -> Result<Self> {
        let mut batch = Batch { ids: Vec::new(), lengths: Vec::new(), labels: Vec::new(), width: 0 };
        for (i, e) in examples.into_iter().enumerate() {
            if i == 0 {
                batch.width = e.token_ids.len();
            }
            if e.token_ids.len() != batch.width || e.true_length == 0 || e.true_length > batch.width {
                return Err(Error::Data(format!(
                    "example {i}: {} ids with true length {}, batch width {}",
                    e.token_ids.len(),
                    e.true_length,
                    batch.width
                )));
            }
            batch.ids.extend_from_slice(&e.token_ids);
            batch.lengths.push(e.true_length);
            batch.labels.push(e.labels);
        }
        if batch.lengths.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn mask(&self) -> Result<Mask> {
        Mask::from_lengths(&self.lengths, self.width)
    }

    /// One-hot labels `[B,3]` for a task.
    pub fn targets(&self, task: Task) -> Tensor {
        let data = self.labels.iter().flat_map(|l| l[task.index()].one_hot()).collect();
        Tensor::new(vec![self.len(), 3], data).expect("one-hot shape")
    }
}

/// Forward graph handles. `probs` and `r_task` follow `config.tasks` order.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub probs: Vec<Var>,
    pub r_task: Vec<Var>,
    pub attention: Var,
    pub r_fa: Var,
    pub h_c: Var,
    /// The per-position vectors the attention branch reads.
    pub attention_input: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub tasks: Vec<Task>,
    pub probs: Vec<Tensor>,
    pub r_task: Vec<Tensor>,
    pub attention: Tensor,
    pub r_fa: Tensor,
    pub h_c: Tensor,
    pub attention_input: Tensor,
}

impl ForwardVars {
    pub fn output(&self, tape: &Tape, config: &ModelConfig) -> ForwardOutput {
        ForwardOutput {
            tasks: config.tasks.clone(),
            probs: self.probs.iter().map(|&v| tape.value(v).clone()).collect(),
            r_task: self.r_task.iter().map(|&v| tape.value(v).clone()).collect(),
            attention: tape.value(self.attention).clone(),
            r_fa: tape.value(self.r_fa).clone(),
            h_c: tape.value(self.h_c).clone(),
            attention_input: tape.value(self.attention_input).clone(),
        }
    }
}

impl ForwardOutput {
    pub fn task_probs(&self, task: Task) -> Result<&Tensor> {
        let i = self.tasks.iter().position(|&t| t == task).ok_or_else(|| Error::invalid(format!("no output for {task}")))?;
        Ok(&self.probs[i])
    }

    /// Argmax class per example; ties go to the lower class index.
    pub fn predicted_labels(&self, task: Task) -> Result<Vec<Label>> {
        let p = self.task_probs(task)?;
        Ok((0..p.shape()[0])
            .map(|r| {
                let row = p.row(r);
                let best = (0..3).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                Label::from_class_index(best).expect("class index")
            })
            .collect())
    }
}

/// Embedding → (attention ∥ recurrent) → per-task confusion → heads.
pub fn forward(
    tape: &mut Tape,
    bound: &Bound,
    batch: &Batch,
    config: &ModelConfig,
    mode: Mode,
    rng: &mut Rng,
) -> Result<ForwardVars> {
    let mask = batch.mask()?;
    let table = bound.get(params::EMBEDDING)?;
    let emb = tape.gather(table, &batch.ids, &[batch.len(), batch.width], Some(PAD_ID))?;
    let emb = tape.dropout(emb, config.dropout, mode, rng)?;
    let rec = recurrent_encode(tape, emb, bound, &mask, config)?;
    let attention_input = match config.attention_source {
        AttentionSource::Embedding => emb,
        AttentionSource::RnnOutput => rec.outputs,
    };
    let (r_fa, attention) = strengthen_attention(tape, attention_input, bound, &mask, config)?;
    let mut probs = Vec::with_capacity(config.tasks.len());
    let mut r_task = Vec::with_capacity(config.tasks.len());
    for &task in &config.tasks {
        let r = feature_confusion(tape, rec.h_c, r_fa, task, bound, config, mode, rng)?;
        probs.push(predict(tape, r, task, bound)?);
        r_task.push(r);
    }
    Ok(ForwardVars { probs, r_task, attention, r_fa, h_c: rec.h_c, attention_input })
}

/// Eval-mode predictions in chunks of `chunk` examples, one label list per
/// entry of `config.tasks`.
pub fn predict_labels(
    config: &ModelConfig,
    params: &super::ParameterStore,
    data: &[EncodedExample],
    chunk: usize,
) -> Result<Vec<Vec<Label>>> {
    let mut out = vec![Vec::with_capacity(data.len()); config.tasks.len()];
    let mut rng = crate::seed::rng(0);
    for part in data.chunks(chunk.max(1)) {
        let out_part = eval_output(config, params, &Batch::new(part)?, &mut rng)?;
        for (k, &task) in config.tasks.iter().enumerate() {
            out[k].extend(out_part.predicted_labels(task)?);
        }
    }
    Ok(out)
}

/// Eval-mode forward on a fresh tape.
pub fn eval_output(config: &ModelConfig, params: &super::ParameterStore, batch: &Batch, rng: &mut Rng) -> Result<ForwardOutput> {
    let mut tape = Tape::new();
    let bound = params.bind_frozen(&mut tape)?;
    let vars = forward(&mut tape, &bound, batch, config, Mode::Eval, rng)?;
    Ok(vars.output(&tape, config))
}
