//! End-to-end finite-difference check on a tiny model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::multitask_loss;
use crate::data::EncodedExample;
use crate::error::{Error, Result};
use crate::model::params::{ATT_C, ATT_T};
use crate::model::{forward, Batch, Bound, ModelConfig, ParameterStore};
use crate::numerics::{finite_difference_check, GradCheck, Mode, Tensor};
use crate::seed;
use crate::task::{Label, Task};

pub const MAX_TOY_LENGTH: usize = 8;
pub const MAX_TOY_EMBEDDING: usize = 16;
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyDims {
    pub length: usize,
    pub d_e: usize,
    pub d_h: usize,
}

impl Default for ToyDims {
    fn default() -> Self {
        ToyDims { length: 5, d_e: 8, d_h: 4 }
    }
}

impl ToyDims {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.length > MAX_TOY_LENGTH || self.d_e == 0 || self.d_e > MAX_TOY_EMBEDDING || self.d_h == 0 {
            return Err(Error::Config(format!(
                "gradient check dims {}x{}x{} outside 1 <= L <= {MAX_TOY_LENGTH}, 1 <= d_e <= {MAX_TOY_EMBEDDING}, d_h >= 1",
                self.length, self.d_e, self.d_h
            )));
        }
        Ok(())
    }
}

const TOY_VOCAB: usize = 7;

/// Tri-task model on two examples (one full length, one shorter), with
/// dropout active under a fixed mask and `c`, `t_t` spread across both sides
/// of their penalty thresholds.
pub fn toy_gradient_check(dims: ToyDims, config: &ModelConfig, seed_value: u64) -> Result<GradCheck> {
    dims.validate()?;
    let config = ModelConfig { d_e: dims.d_e, d_h: dims.d_h, ..config.clone() };
    let l = dims.length;
    let mut rng = seed::rng(seed_value);
    // O(1) embeddings keep every gradient well above finite-difference roundoff
    let mut table = Tensor::uniform(&[TOY_VOCAB, dims.d_e], -1.0, 1.0, &mut rng);
    table.data_mut()[..dims.d_e].iter_mut().for_each(|v| *v = 0.0);
    let mut params = ParameterStore::init(&config, TOY_VOCAB, l, Some(table), seed_value)?;
    if config.has_strengthen_params() {
        let pick = |rng: &mut seed::Rng, lo: f64, hi: f64| -> f64 { rng.gen_range(lo..hi) };
        let c: Vec<f64> = (0..l)
            .map(|i| match i % 3 {
                0 => pick(&mut rng, 1.05, 1.3),
                1 => pick(&mut rng, -0.2, -0.05),
                _ => pick(&mut rng, 0.05, 0.4),
            })
            .collect();
        let t: Vec<f64> = (0..l).map(|i| if i % 2 == 0 { pick(&mut rng, 2.0, 4.5) } else { pick(&mut rng, 5.5, 8.0) }).collect();
        params.insert(ATT_C, Tensor::vector(c));
        params.insert(ATT_T, Tensor::vector(t));
    }
    let short = l.div_ceil(2);
    let examples: Vec<EncodedExample> = [l, short]
        .iter()
        .map(|&len| {
            let mut ids = vec![0; l];
            ids[..len].iter_mut().for_each(|v| *v = rng.gen_range(1..TOY_VOCAB));
            let labels = std::array::from_fn(|_| Label::ALL[rng.gen_range(0..3)]);
            EncodedExample { token_ids: ids, true_length: len, labels }
        })
        .collect();
    let batch = Batch::new(&examples)?;
    let targets: Vec<Tensor> = config.tasks.iter().map(|&t: &Task| batch.targets(t)).collect();
    let names: Vec<String> = params.iter().map(|(n, _)| n.clone()).collect();
    let values: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let dropout_seed = seed::derive(seed_value, &[9]);
    finite_difference_check(
        |tape, vars| {
            let bound = Bound::from_vars(names.iter().cloned(), vars);
            let mut drop_rng = seed::rng(dropout_seed);
            let fw = forward(tape, &bound, &batch, &config, Mode::Train, &mut drop_rng)?;
            Ok(multitask_loss(tape, &fw.probs, &targets, &bound, &config)?.total)
        },
        &values,
        FD_STEP,
    )
}
