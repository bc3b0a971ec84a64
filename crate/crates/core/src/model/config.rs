use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionKind {
    Strengthen,
    PlainSelf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecurrentKind {
    Gru,
    Lstm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Directions {
    Bi,
    Uni,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionSource {
    Embedding,
    RnnOutput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_e: usize,
    pub d_h: usize,
    pub attention: AttentionKind,
    pub recurrent: RecurrentKind,
    pub directions: Directions,
    pub attention_source: AttentionSource,
    pub tasks: Vec<Task>,
    pub constraints_enabled: bool,
    pub dropout: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub w_thr: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_e: 300,
            d_h: 128,
            attention: AttentionKind::Strengthen,
            recurrent: RecurrentKind::Gru,
            directions: Directions::Bi,
            attention_source: AttentionSource::Embedding,
            tasks: Task::ALL.to_vec(),
            constraints_enabled: true,
            dropout: 0.1,
            epsilon: 3e-3,
            alpha: 1e-2,
            w_thr: 5.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_e == 0 || self.d_h == 0 {
            return Err(Error::Config(format!("d_e and d_h must be >= 1 (got {}, {})", self.d_e, self.d_h)));
        }
        if !self.tasks.contains(&Task::Subtext) {
            return Err(Error::Config("tasks must include subtext".into()));
        }
        let mut sorted = self.tasks.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.tasks.len() {
            return Err(Error::Config(format!("duplicate task in {:?}", self.tasks)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        if ![self.epsilon, self.alpha, self.w_thr].iter().all(|v| v.is_finite()) {
            return Err(Error::Config("epsilon, alpha and w_thr must be finite".into()));
        }
        Ok(())
    }

    pub fn directions(&self) -> usize {
        match self.directions {
            Directions::Bi => 2,
            Directions::Uni => 1,
        }
    }

    /// Width of `h_c` and of the per-position recurrent outputs.
    pub fn rnn_width(&self) -> usize {
        self.d_h * self.directions()
    }

    /// Width of the vectors the attention branch reads (and of `r_fa`).
    pub fn attention_width(&self) -> usize {
        match self.attention_source {
            AttentionSource::Embedding => self.d_e,
            AttentionSource::RnnOutput => self.rnn_width(),
        }
    }

    pub fn confusion_width(&self) -> usize {
        self.rnn_width() + self.attention_width()
    }

    pub fn has_strengthen_params(&self) -> bool {
        self.attention == AttentionKind::Strengthen
    }

    /// Whether the loss carries the `c` / `t_t` penalty terms.
    pub fn penalties_active(&self) -> bool {
        self.constraints_enabled && self.has_strengthen_params()
    }

    pub fn task_position(&self, task: Task) -> Result<usize> {
        self.tasks.iter().position(|&t| t == task).ok_or_else(|| Error::invalid(format!("task {task} not in model config")))
    }
}

/// Named architecture variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Strengthen attention, Bi-GRU, constraints on.
    Sasicm,
    /// Plain self-attention.
    Sa,
    Lstm,
    /// Constraints off.
    Wc,
    /// Single-direction GRU.
    Sg,
    /// Attention reads the recurrent outputs.
    St,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::Sasicm, Variant::Sa, Variant::Lstm, Variant::Wc, Variant::Sg, Variant::St];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sasicm => "sasicm",
            Variant::Sa => "sa",
            Variant::Lstm => "lstm",
            Variant::Wc => "wc",
            Variant::Sg => "sg",
            Variant::St => "st",
        }
    }

    /// Sets the architecture switches on top of `base`, keeping sizes,
    /// tasks and loss hyperparameters.
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = ModelConfig {
            attention: AttentionKind::Strengthen,
            recurrent: RecurrentKind::Gru,
            directions: Directions::Bi,
            attention_source: AttentionSource::Embedding,
            constraints_enabled: true,
            ..base.clone()
        };
        match self {
            Variant::Sasicm => {}
            Variant::Sa => cfg.attention = AttentionKind::PlainSelf,
            Variant::Lstm => cfg.recurrent = RecurrentKind::Lstm,
            Variant::Wc => cfg.constraints_enabled = false,
            Variant::Sg => cfg.directions = Directions::Uni,
            Variant::St => cfg.attention_source = AttentionSource::RnnOutput,
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}' (expected sasicm, sa, lstm, wc, sg or st)")))
    }
}
