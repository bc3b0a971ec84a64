//! The multi-task classifier: embedding, strengthen attention, recurrent
//! encoder, per-task feature confusion and prediction heads.

mod config;
mod forward;
mod layers;
pub mod params;


use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{AttentionKind, AttentionSource, Directions, ModelConfig, RecurrentKind, Variant};
pub use forward::{eval_output, forward, predict_labels, Batch, ForwardOutput, ForwardVars};
pub use layers::{feature_confusion, predict, recurrent_encode, strengthen_attention, Recurrent};
pub use params::{Bound, ParameterStore};

use crate::data::{EncodedExample, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::task::{Label, Task};

pub const CHECKPOINT_FORMAT: &str = "sasicm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Chunk size for eval-mode prediction.
pub const EVAL_CHUNK: usize = 256;

/// Config, vocabulary and parameters: everything needed to run inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParameterStore,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    vocab: Vocabulary,
    params: ParameterStore,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocabulary, embeddings: Option<Tensor>, seed: u64) -> Result<Self> {
        let params = ParameterStore::init(&config, vocab.len(), vocab.fixing_length(), embeddings, seed)?;
        Ok(Model { config, vocab, params })
    }

    pub fn fixing_length(&self) -> usize {
        self.vocab.fixing_length()
    }

    pub fn predict_labels(&self, data: &[EncodedExample]) -> Result<Vec<Vec<Label>>> {
        predict_labels(&self.config, &self.params, data, EVAL_CHUNK)
    }

    pub fn predict_task(&self, data: &[EncodedExample], task: Task) -> Result<Vec<Label>> {
        let k = self.config.task_position(task)?;
        Ok(self.predict_labels(data)?.swap_remove(k))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.params.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(s)?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint {} v{}", file.format, file.version)));
        }
        file.config.validate()?;
        file.params.validate(&file.config, file.vocab.len(), file.vocab.fixing_length())?;
        Ok(Model { config: file.config, vocab: file.vocab, params: file.params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
