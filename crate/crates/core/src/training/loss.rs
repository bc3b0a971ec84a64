use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::params::{ATT_C, ATT_T};
use crate::model::{Bound, ModelConfig, ParameterStore};
use crate::numerics::{Tape, Tensor, Var};

/// Probabilities below this are clamped before the log.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct PenaltyVars {
    pub c_upper: Var,
    pub c_lower: Var,
    pub t_lower: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct Loss {
    pub total: Var,
    pub cross_entropy: Var,
    pub penalties: Option<PenaltyVars>,
}

/// Penalty magnitudes evaluated on a parameter store. All zero when the
/// config carries no penalties.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyValues {
    /// `sum(relu(c - 1))`
    pub c_upper: f64,
    /// `sum(relu(eps - c))`
    pub c_lower: f64,
    /// `alpha * sum(relu(w_thr - t))`
    pub t_lower: f64,
}

impl PenaltyValues {
    pub fn max(&self) -> f64 {
        self.c_upper.max(self.c_lower).max(self.t_lower)
    }
}

fn check_one_hot(t: &Tensor, rows: usize) -> Result<()> {
    if t.shape() != [rows, 3] {
        return Err(Error::Shape { op: "multitask_loss", shapes: vec![t.shape().to_vec(), vec![rows, 3]] });
    }
    for r in 0..rows {
        let row = t.row(r);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != 2 {
            return Err(Error::invalid(format!("label row {r} is not one-hot: {row:?}")));
        }
    }
    Ok(())
}

fn penalty_terms(tape: &mut Tape, bound: &Bound, config: &ModelConfig) -> Result<PenaltyVars> {
    let c = bound.get(ATT_C)?;
    let t = bound.get(ATT_T)?;
    let above = tape.shift(c, -1.0)?;
    let above = tape.relu(above)?;
    let c_upper = tape.sum_all(above)?;
    let neg_c = tape.scale(c, -1.0)?;
    let below = tape.shift(neg_c, config.epsilon)?;
    let below = tape.relu(below)?;
    let c_lower = tape.sum_all(below)?;
    let neg_t = tape.scale(t, -1.0)?;
    let short = tape.shift(neg_t, config.w_thr)?;
    let short = tape.relu(short)?;
    let short = tape.sum_all(short)?;
    let t_lower = tape.scale(short, config.alpha)?;
    Ok(PenaltyVars { c_upper, c_lower, t_lower })
}

/// Averaged cross-entropy over tasks and examples plus, when active, the
/// attention penalties. `probs[k]` and `targets[k]` are `[N,3]` for the
/// k-th task of `config.tasks`.
pub fn multitask_loss(tape: &mut Tape, probs: &[Var], targets: &[Tensor], bound: &Bound, config: &ModelConfig) -> Result<Loss> {
    if probs.is_empty() || probs.len() != targets.len() {
        return Err(Error::invalid(format!("{} probability blocks for {} target blocks", probs.len(), targets.len())));
    }
    let n = tape.shape(probs[0])[0];
    let mut sum: Option<Var> = None;
    for (&p, y) in probs.iter().zip(targets) {
        check_one_hot(y, n)?;
        let logp = tape.ln(p, LOG_FLOOR)?;
        let y = tape.constant(y.clone())?;
        let picked = tape.mul(logp, y)?;
        let s = tape.sum_all(picked)?;
        sum = Some(match sum {
            Some(acc) => tape.add(acc, s)?,
            None => s,
        });
    }
    let cross_entropy = tape.scale(sum.expect("nonempty"), -1.0 / (probs.len() * n) as f64)?;
    if !config.penalties_active() {
        return Ok(Loss { total: cross_entropy, cross_entropy, penalties: None });
    }
    let pen = penalty_terms(tape, bound, config)?;
    let mut total = tape.add(cross_entropy, pen.c_upper)?;
    total = tape.add(total, pen.c_lower)?;
    total = tape.add(total, pen.t_lower)?;
    Ok(Loss { total, cross_entropy, penalties: Some(pen) })
}

/// Penalty terms of the constrained loss for the current parameter values,
/// whether or not the config applies them.
pub fn penalty_values(params: &ParameterStore, config: &ModelConfig) -> Result<PenaltyValues> {
    if !config.has_strengthen_params() {
        return Ok(PenaltyValues::default());
    }
    let c = params.get(ATT_C)?.data();
    let t = params.get(ATT_T)?.data();
    Ok(PenaltyValues {
        c_upper: c.iter().map(|&v| (v - 1.0).max(0.0)).sum(),
        c_lower: c.iter().map(|&v| (config.epsilon - v).max(0.0)).sum(),
        t_lower: config.alpha * t.iter().map(|&v| (config.w_thr - v).max(0.0)).sum::<f64>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::Task;

    fn config(tasks: Vec<Task>) -> ModelConfig {
        ModelConfig { d_e: 2, d_h: 2, tasks, ..Default::default() }
    }

    fn store(c: Vec<f64>, t: Vec<f64>) -> ParameterStore {
        let mut p = ParameterStore::default();
        p.insert(ATT_C, Tensor::vector(c));
        p.insert(ATT_T, Tensor::vector(t));
        p
    }

    fn one_hot(rows: &[usize]) -> Tensor {
        let data = rows.iter().flat_map(|&c| (0..3).map(move |j| if j == c { 1.0 } else { 0.0 })).collect();
        Tensor::new(vec![rows.len(), 3], data).unwrap()
    }

    fn loss_value(cfg: &ModelConfig, probs: &[Tensor], targets: &[Tensor], params: &ParameterStore) -> f64 {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape).unwrap();
        let p: Vec<Var> = probs.iter().map(|t| tape.constant(t.clone()).unwrap()).collect();
        let l = multitask_loss(&mut tape, &p, targets, &bound, cfg).unwrap();
        tape.value(l.total).item()
    }

    #[test]
    fn perfect_predictions_cost_nothing() {
        let cfg = config(vec![Task::Subtext]);
        let y = one_hot(&[0, 2, 1]);
        let v = loss_value(&cfg, &[y.clone()], &[y], &store(vec![0.5, 0.01], vec![5.0, 7.0]));
        assert!(v.abs() <= 1e-10);
    }

    #[test]
    fn uniform_predictions_cost_ln3() {
        let cfg = config(Task::ALL.to_vec());
        let u = Tensor::full(&[2, 3], 1.0 / 3.0);
        let y = one_hot(&[0, 2]);
        let v = loss_value(&cfg, &[u.clone(), u.clone(), u], &[y.clone(), y.clone(), y], &store(vec![0.5], vec![5.0]));
        assert!((v - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn penalty_arithmetic() {
        let cfg = config(vec![Task::Subtext]);
        let y = one_hot(&[1]);
        let base = loss_value(&cfg, &[y.clone()], &[y.clone()], &store(vec![0.5], vec![5.0]));
        let c_high = loss_value(&cfg, &[y.clone()], &[y.clone()], &store(vec![1.5], vec![5.0]));
        let t_low = loss_value(&cfg, &[y.clone()], &[y.clone()], &store(vec![0.5], vec![4.0]));
        assert!((c_high - base - 0.5).abs() < 1e-12);
        assert!((t_low - base - 0.01).abs() < 1e-12);
        let wc = ModelConfig { constraints_enabled: false, ..cfg };
        assert_eq!(loss_value(&wc, &[y.clone()], &[y.clone()], &store(vec![1.5], vec![4.0])), base);
    }

    #[test]
    fn penalty_values_match_loss_terms() {
        let cfg = config(vec![Task::Subtext]);
        let p = store(vec![1.5, 0.001, 0.5], vec![4.0, 6.0, 3.0]);
        let v = penalty_values(&p, &cfg).unwrap();
        assert!((v.c_upper - 0.5).abs() < 1e-12);
        assert!((v.c_lower - 0.002).abs() < 1e-12);
        assert!((v.t_lower - 0.03).abs() < 1e-12);
    }

    #[test]
    fn penalty_gradient_directions() {
        let cfg = config(vec![Task::Subtext]);
        let y = one_hot(&[1]);
        let p = store(vec![1.4, 0.001, 0.5], vec![4.0, 6.0, 5.5]);
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape).unwrap();
        let probs = tape.constant(Tensor::full(&[1, 3], 1.0 / 3.0)).unwrap();
        let l = multitask_loss(&mut tape, &[probs], &[y.clone()], &bound, &cfg).unwrap();
        tape.backward(l.total).unwrap();
        let gc = tape.grad(bound.get(ATT_C).unwrap());
        let gt = tape.grad(bound.get(ATT_T).unwrap());
        assert!(gc.data()[0] > 0.0);
        assert!(gc.data()[1] < 0.0);
        assert_eq!(gc.data()[2], 0.0);
        assert!(gt.data()[0] < 0.0);
        assert_eq!(gt.data()[1], 0.0);

        // central differences agree away from the kinks
        let h = 1e-6;
        let f = |c: Vec<f64>, t: Vec<f64>| loss_value(&cfg, &[Tensor::full(&[1, 3], 1.0 / 3.0)], &[y.clone()], &store(c, t));
        let fd_c0 = (f(vec![1.4 + h, 0.001, 0.5], vec![4.0, 6.0, 5.5]) - f(vec![1.4 - h, 0.001, 0.5], vec![4.0, 6.0, 5.5])) / (2.0 * h);
        let fd_t0 = (f(vec![1.4, 0.001, 0.5], vec![4.0 + h, 6.0, 5.5]) - f(vec![1.4, 0.001, 0.5], vec![4.0 - h, 6.0, 5.5])) / (2.0 * h);
        assert!((fd_c0 - gc.data()[0]).abs() < 1e-6);
        assert!((fd_t0 - gt.data()[0]).abs() < 1e-6);
    }

    #[test]
    fn unconstrained_penalty_params_get_no_gradient_without_ce() {
        // zero CE: perfect predictions on constant probabilities
        let cfg = ModelConfig { constraints_enabled: false, ..config(vec![Task::Subtext]) };
        let y = one_hot(&[2]);
        let p = store(vec![1.5, -0.2], vec![1.0, 2.0]);
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape).unwrap();
        let probs = tape.constant(y.clone()).unwrap();
        let l = multitask_loss(&mut tape, &[probs], &[y], &bound, &cfg).unwrap();
        tape.backward(l.total).unwrap();
        assert!(tape.grad(bound.get(ATT_C).unwrap()).data().iter().all(|&g| g == 0.0));
        assert!(tape.grad(bound.get(ATT_T).unwrap()).data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn dropping_a_perfect_task_rescales() {
        let tri = ModelConfig { constraints_enabled: false, ..config(Task::ALL.to_vec()) };
        let bi = ModelConfig { tasks: vec![Task::Subtext, Task::Sarcasm], ..tri.clone() };
        let p = store(vec![0.5], vec![5.0]);
        let pa = Tensor::new(vec![2, 3], vec![0.2, 0.5, 0.3, 0.6, 0.3, 0.1]).unwrap();
        let pb = Tensor::new(vec![2, 3], vec![0.1, 0.1, 0.8, 0.3, 0.3, 0.4]).unwrap();
        let ya = one_hot(&[1, 0]);
        let yb = one_hot(&[2, 1]);
        let yc = one_hot(&[0, 2]);
        let l3 = loss_value(&tri, &[pa.clone(), pb.clone(), yc.clone()], &[ya.clone(), yb.clone(), yc], &p);
        let l2 = loss_value(&bi, &[pa, pb], &[ya, yb], &p);
        assert!((l3 - l2 * 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_one_hot() {
        let cfg = config(vec![Task::Subtext]);
        let mut tape = Tape::new();
        let p = store(vec![0.5], vec![5.0]);
        let bound = p.bind(&mut tape).unwrap();
        let probs = tape.constant(Tensor::full(&[1, 3], 1.0 / 3.0)).unwrap();
        let bad = Tensor::new(vec![1, 3], vec![0.5, 0.5, 0.0]).unwrap();
        assert!(multitask_loss(&mut tape, &[probs], &[bad], &bound, &cfg).is_err());
    }
}
