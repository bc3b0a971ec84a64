//! Pretrained vector ingestion (GloVe text format).

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::vocab::{Vocabulary, PAD_ID};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::seed;

pub const INIT_RANGE: f64 = 0.05;

/// Random table: every row uniform in `(-0.05, 0.05)` except the pad row,
/// which is zero.
pub fn random_embeddings(vocab_size: usize, dim: usize, seed: u64) -> Tensor {
    let mut rng = seed::rng(seed);
    let mut t = Tensor::uniform(&[vocab_size, dim], -INIT_RANGE, INIT_RANGE, &mut rng);
    t.data_mut()[PAD_ID * dim..(PAD_ID + 1) * dim].iter_mut().for_each(|v| *v = 0.0);
    t
}

/// Reads `token v1 ... v_dim` lines. Vocabulary tokens found in the file
/// take the file vector; the rest keep their seeded random row.
pub fn load_embeddings(path: impl AsRef<Path>, dim: usize, vocab: &Vocabulary, seed: u64) -> Result<Tensor> {
    let path = path.as_ref();
    let mut table = random_embeddings(vocab.len(), dim, seed);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line: i + 1, message };
        let values = parts
            .map(|p| p.parse::<f64>().map_err(|e| parse_err(format!("bad value '{p}': {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(parse_err(format!("expected {dim} values, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite value".into()));
        }
        let id = vocab.id(token);
        if vocab.token(id) == Some(token) && id != PAD_ID {
            table.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&values);
        }
    }
    Ok(table)
}
