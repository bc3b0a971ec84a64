//! Named parameter tensors and their binding onto a tape.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, RecurrentKind};
use crate::data::random_embeddings;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::seed;
use crate::task::Task;

pub const EMBEDDING: &str = "embedding";
pub const ATT_Q: &str = "attention.q";
pub const ATT_K: &str = "attention.k";
pub const ATT_V: &str = "attention.v";
pub const ATT_T: &str = "attention.t";
pub const ATT_C: &str = "attention.c";

pub const GRU_GATES: [&str; 3] = ["r", "z", "h"];
pub const LSTM_GATES: [&str; 4] = ["i", "f", "o", "g"];

pub fn direction_name(d: usize) -> &'static str {
    if d == 0 {
        "fwd"
    } else {
        "bwd"
    }
}

fn cell_name(kind: RecurrentKind) -> &'static str {
    match kind {
        RecurrentKind::Gru => "gru",
        RecurrentKind::Lstm => "lstm",
    }
}

pub fn gates(kind: RecurrentKind) -> &'static [&'static str] {
    match kind {
        RecurrentKind::Gru => &GRU_GATES,
        RecurrentKind::Lstm => &LSTM_GATES,
    }
}

/// `(weight, bias)` names for one gate of one direction.
pub fn gate_names(kind: RecurrentKind, direction: usize, gate: &str) -> (String, String) {
    let prefix = format!("{}.{}.{gate}", cell_name(kind), direction_name(direction));
    (format!("{prefix}.w"), format!("{prefix}.b"))
}

pub fn confusion_name(task: Task) -> String {
    format!("confusion.{task}")
}

pub fn head_names(task: Task) -> (String, String) {
    (format!("head.{task}.w"), format!("head.{task}.b"))
}

/// Every parameter the config needs, with its shape, in a fixed order.
pub fn expected_shapes(config: &ModelConfig, vocab_size: usize, fixing_length: usize) -> Vec<(String, Vec<usize>)> {
    let (d_e, d_h) = (config.d_e, config.d_h);
    let d_a = config.attention_width();
    let d = config.confusion_width();
    let mut out = vec![(EMBEDDING.to_string(), vec![vocab_size, d_e])];
    out.push((ATT_Q.into(), vec![d_a, d_h]));
    out.push((ATT_K.into(), vec![d_a, d_h]));
    out.push((ATT_V.into(), vec![d_a, d_a]));
    if config.has_strengthen_params() {
        out.push((ATT_T.into(), vec![fixing_length]));
        out.push((ATT_C.into(), vec![fixing_length]));
    }
    for dir in 0..config.directions() {
        for gate in gates(config.recurrent) {
            let (w, b) = gate_names(config.recurrent, dir, gate);
            out.push((w, vec![d_h + d_e, d_h]));
            out.push((b, vec![d_h]));
        }
    }
    for &task in &config.tasks {
        out.push((confusion_name(task), vec![d, d]));
        let (w, b) = head_names(task);
        out.push((w, vec![3, d]));
        out.push((b, vec![3]));
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParameterStore {
    /// Glorot matrices, zero biases, `t_t = w_thr`, `c = 1/L`. The embedding
    /// table is taken from `embeddings` when given, else drawn at random.
    pub fn init(
        config: &ModelConfig,
        vocab_size: usize,
        fixing_length: usize,
        embeddings: Option<Tensor>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if fixing_length == 0 || vocab_size == 0 {
            return Err(Error::invalid("fixing length and vocabulary size must be positive"));
        }
        let mut rng = seed::rng(seed::derive(seed, &[0]));
        let mut tensors = BTreeMap::new();
        for (name, shape) in expected_shapes(config, vocab_size, fixing_length) {
            let t = match name.as_str() {
                EMBEDDING => match &embeddings {
                    Some(e) => e.clone(),
                    None => random_embeddings(vocab_size, config.d_e, seed::derive(seed, &[1])),
                },
                ATT_T => Tensor::full(&shape, config.w_thr),
                ATT_C => Tensor::full(&shape, 1.0 / fixing_length as f64),
                _ if shape.len() == 1 => Tensor::zeros(&shape),
                _ => Tensor::glorot(shape[0], shape[1], &mut rng),
            };
            tensors.insert(name, t);
        }
        let store = ParameterStore { tensors };
        store.validate(config, vocab_size, fixing_length)?;
        Ok(store)
    }

    pub fn from_map(tensors: BTreeMap<String, Tensor>) -> Self {
        ParameterStore { tensors }
    }

    /// Exactly the expected names, each with the expected shape.
    pub fn validate(&self, config: &ModelConfig, vocab_size: usize, fixing_length: usize) -> Result<()> {
        let expected = expected_shapes(config, vocab_size, fixing_length);
        for (name, shape) in &expected {
            match self.tensors.get(name) {
                None => return Err(Error::Config(format!("missing parameter {name}"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::Config(format!("parameter {name} has shape {:?}, expected {shape:?}", t.shape())))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = self.tensors.keys().find(|k| !expected.iter().any(|(n, _)| n == *k)) {
            return Err(Error::Config(format!("unexpected parameter {extra}")));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::invalid(format!("no parameter named {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors.get_mut(name).ok_or_else(|| Error::invalid(format!("no parameter named {name}")))
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> Result<Bound> {
        let mut vars = BTreeMap::new();
        for (name, t) in &self.tensors {
            vars.insert(name.clone(), tape.param(t.clone())?);
        }
        Ok(Bound { vars })
    }

    /// Binds as constants: no gradients are recorded.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Result<Bound> {
        let mut vars = BTreeMap::new();
        for (name, t) in &self.tensors {
            vars.insert(name.clone(), tape.constant(t.clone())?);
        }
        Ok(Bound { vars })
    }
}

/// Parameters placed on a tape.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn from_vars(names: impl IntoIterator<Item = String>, vars: &[Var]) -> Self {
        Bound { vars: names.into_iter().zip(vars.iter().copied()).collect() }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| Error::invalid(format!("parameter {name} not bound")))
    }

    pub fn grads(&self, tape: &Tape) -> BTreeMap<String, Tensor> {
        self.vars.iter().map(|(n, &v)| (n.clone(), tape.grad(v))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::Variant;

    fn small() -> ModelConfig {
        ModelConfig { d_e: 6, d_h: 3, ..Default::default() }
    }

    #[test]
    fn init_matches_expected_shapes() {
        let cfg = small();
        let p = ParameterStore::init(&cfg, 11, 7, None, 1).unwrap();
        assert_eq!(p.get(ATT_T).unwrap(), &Tensor::full(&[7], 5.0));
        assert_eq!(p.get(ATT_C).unwrap().shape(), &[7]);
        assert_eq!(p.get(&confusion_name(Task::Metaphor)).unwrap().shape(), &[12, 12]);
        assert_eq!(p.get("gru.bwd.z.w").unwrap().shape(), &[9, 3]);
        assert!(p.get(EMBEDDING).unwrap().row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn variants_change_parameter_set() {
        let cfg = small();
        let sa = ParameterStore::init(&Variant::Sa.apply(&cfg), 11, 7, None, 1).unwrap();
        assert!(sa.get(ATT_T).is_err());
        let lstm = ParameterStore::init(&Variant::Lstm.apply(&cfg), 11, 7, None, 1).unwrap();
        assert!(lstm.get("lstm.fwd.f.w").is_ok());
        let sg = ParameterStore::init(&Variant::Sg.apply(&cfg), 11, 7, None, 1).unwrap();
        assert!(sg.get("gru.bwd.r.w").is_err());
    }

    #[test]
    fn validate_catches_shape_and_extra() {
        let cfg = small();
        let mut p = ParameterStore::init(&cfg, 11, 7, None, 1).unwrap();
        p.insert(ATT_T, Tensor::zeros(&[6]));
        assert!(p.validate(&cfg, 11, 7).is_err());
        let mut p = ParameterStore::init(&cfg, 11, 7, None, 1).unwrap();
        p.insert("stray", Tensor::zeros(&[1]));
        assert!(p.validate(&cfg, 11, 7).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let cfg = small();
        assert_eq!(ParameterStore::init(&cfg, 11, 7, None, 4).unwrap(), ParameterStore::init(&cfg, 11, 7, None, 4).unwrap());
        assert_ne!(ParameterStore::init(&cfg, 11, 7, None, 4).unwrap(), ParameterStore::init(&cfg, 11, 7, None, 5).unwrap());
    }
}
