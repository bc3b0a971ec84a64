//! Model components as tape computations.

use super::config::{AttentionKind, ModelConfig, RecurrentKind};
use super::params::{self, Bound};
use crate::error::{Error, Result};
use crate::numerics::{Mask, Mode, Tape, Var};
use crate::seed::Rng;
use crate::task::Task;

/// Pooled sentence vector `r_fa` `[B,d_a]` and the attention matrix `[B,L,L]`.
///
/// `x` is `[B,L,d_a]`; `mask` marks the valid positions of each example and
/// restricts both the key columns and the pooling positions.
pub fn strengthen_attention(tape: &mut Tape, x: Var, bound: &Bound, mask: &Mask, config: &ModelConfig) -> Result<(Var, Var)> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 3 {
        return Err(Error::Shape { op: "strengthen_attention", shapes: vec![shape] });
    }
    let (b, l) = (shape[0], shape[1]);
    let q = tape.matmul(x, bound.get(params::ATT_Q)?, false)?;
    let k = tape.matmul(x, bound.get(params::ATT_K)?, false)?;
    let s = tape.matmul(q, k, true)?;
    let s = tape.scale(s, 1.0 / (config.d_h as f64).sqrt())?;
    let a0 = tape.softmax(s, Some(mask))?;

    let att = match config.attention {
        AttentionKind::PlainSelf => a0,
        AttentionKind::Strengthen => {
            let t = bound.get(params::ATT_T)?;
            let c = bound.get(params::ATT_C)?;
            if tape.shape(t) != [l] {
                return Err(Error::Shape { op: "strengthen_attention", shapes: vec![shape, tape.shape(t).to_vec()] });
            }
            // one scalar per query row, broadcast across the key axis
            let t = tape.reshape(t, vec![l, 1])?;
            let c = tape.reshape(c, vec![l, 1])?;
            let centred = tape.sub(a0, c)?;
            let scaled = tape.mul(centred, t)?;
            let rect = tape.relu(scaled)?;
            tape.softmax(rect, Some(mask))?
        }
    };

    let v = tape.matmul(x, bound.get(params::ATT_V)?, false)?;
    let r = tape.matmul(att, v, false)?;
    let d_a = tape.shape(r)[2];
    let row_sums = tape.sum_axis(r, 2)?;
    let w = tape.softmax(row_sums, Some(mask))?;
    let w = tape.reshape(w, vec![b, 1, l])?;
    let pooled = tape.matmul(w, r, false)?;
    let r_fa = tape.reshape(pooled, vec![b, d_a])?;
    Ok((r_fa, att))
}

/// Final states `h_c` `[B, dirs·d_h]` plus per-position outputs `[B,L,dirs·d_h]`.
pub struct Recurrent {
    pub h_c: Var,
    pub outputs: Var,
}

struct CellWeights {
    w: Vec<Var>,
    b: Vec<Var>,
}

fn cell_weights(bound: &Bound, kind: RecurrentKind, direction: usize) -> Result<CellWeights> {
    let mut w = Vec::new();
    let mut b = Vec::new();
    for gate in params::gates(kind) {
        let (wn, bn) = params::gate_names(kind, direction, gate);
        w.push(bound.get(&wn)?);
        b.push(bound.get(&bn)?);
    }
    Ok(CellWeights { w, b })
}

fn affine(tape: &mut Tape, input: Var, w: Var, b: Var) -> Result<Var> {
    let m = tape.matmul(input, w, false)?;
    tape.add(m, b)
}

/// Runs one direction. Positions outside an example's valid prefix leave its
/// state untouched, so trailing padding never changes the result.
fn run_direction(
    tape: &mut Tape,
    x: Var,
    mask: &Mask,
    cell: &CellWeights,
    kind: RecurrentKind,
    d_h: usize,
    reverse: bool,
) -> Result<(Var, Vec<Var>)> {
    let (b, l) = (tape.shape(x)[0], tape.shape(x)[1]);
    let zeros = tape.constant(crate::numerics::Tensor::zeros(&[b, d_h]))?;
    let mut h = zeros;
    let mut c = zeros;
    let mut outputs = vec![zeros; l];
    let order: Vec<usize> = if reverse { (0..l).rev().collect() } else { (0..l).collect() };
    for pos in order {
        let cond = mask.column(pos);
        if cond.iter().all(|v| !v) {
            outputs[pos] = h;
            continue;
        }
        let xt = tape.select(x, pos)?;
        let hx = tape.concat(&[h, xt])?;
        match kind {
            RecurrentKind::Gru => {
                let r = affine(tape, hx, cell.w[0], cell.b[0])?;
                let r = tape.sigmoid(r)?;
                let z = affine(tape, hx, cell.w[1], cell.b[1])?;
                let z = tape.sigmoid(z)?;
                let rh = tape.mul(r, h)?;
                let rhx = tape.concat(&[rh, xt])?;
                let cand = affine(tape, rhx, cell.w[2], cell.b[2])?;
                let cand = tape.tanh(cand)?;
                // (1 - z) h + z h~  ==  h + z (h~ - h)
                let delta = tape.sub(cand, h)?;
                let step = tape.mul(z, delta)?;
                let next = tape.add(h, step)?;
                h = tape.blend(&cond, next, h)?;
            }
            RecurrentKind::Lstm => {
                let mut g = Vec::with_capacity(4);
                for k in 0..4 {
                    g.push(affine(tape, hx, cell.w[k], cell.b[k])?);
                }
                let i = tape.sigmoid(g[0])?;
                let f = tape.sigmoid(g[1])?;
                let o = tape.sigmoid(g[2])?;
                let cand = tape.tanh(g[3])?;
                let keep = tape.mul(f, c)?;
                let write = tape.mul(i, cand)?;
                let c_next = tape.add(keep, write)?;
                let squashed = tape.tanh(c_next)?;
                let h_next = tape.mul(o, squashed)?;
                c = tape.blend(&cond, c_next, c)?;
                h = tape.blend(&cond, h_next, h)?;
            }
        }
        outputs[pos] = h;
    }
    Ok((h, outputs))
}

pub fn recurrent_encode(tape: &mut Tape, x: Var, bound: &Bound, mask: &Mask, config: &ModelConfig) -> Result<Recurrent> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 3 || shape[0] != mask.batch() || shape[1] != mask.width() {
        return Err(Error::Shape { op: "recurrent_encode", shapes: vec![shape, vec![mask.batch(), mask.width()]] });
    }
    let mut finals = Vec::new();
    let mut per_dir = Vec::new();
    for dir in 0..config.directions() {
        let cell = cell_weights(bound, config.recurrent, dir)?;
        let (h, outs) = run_direction(tape, x, mask, &cell, config.recurrent, config.d_h, dir == 1)?;
        finals.push(h);
        per_dir.push(tape.stack(&outs)?);
    }
    let h_c = if finals.len() == 1 { finals[0] } else { tape.concat(&finals)? };
    let outputs = if per_dir.len() == 1 { per_dir[0] } else { tape.concat(&per_dir)? };
    Ok(Recurrent { h_c, outputs })
}

/// `W_fc|task · [h_c, r_fa]`, with dropout on the concatenation in train mode.
#[allow(clippy::too_many_arguments)]
pub fn feature_confusion(
    tape: &mut Tape,
    h_c: Var,
    r_fa: Var,
    task: Task,
    bound: &Bound,
    config: &ModelConfig,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var> {
    config.task_position(task)?;
    let joined = tape.concat(&[h_c, r_fa])?;
    let joined = tape.dropout(joined, config.dropout, mode, rng)?;
    let w = bound.get(&params::confusion_name(task))?;
    tape.matmul(joined, w, true)
}

/// `softmax(W_p|task · r_task + b_p|task)`, classes ordered (-1, 0, 1).
pub fn predict(tape: &mut Tape, r_task: Var, task: Task, bound: &Bound) -> Result<Var> {
    let (wn, bn) = params::head_names(task);
    let logits = tape.matmul(r_task, bound.get(&wn)?, true)?;
    let logits = tape.add(logits, bound.get(&bn)?)?;
    tape.softmax(logits, None)
}
