//! Central finite-difference oracle for tape gradients.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// (parameter index, flat entry) of the worst entry.
    pub worst: Option<(usize, usize)>,
    /// Analytic and numeric derivative at the worst entry.
    pub worst_values: Option<(f64, f64)>,
    pub entries_checked: usize,
}

/// Compares tape gradients of `f` against central differences.
///
/// `f` receives a fresh tape plus one leaf per parameter and must return a
/// scalar. The score is `max |a - n| / max(1e-8, |a| + |n|)` over every
/// parameter entry.
pub fn finite_difference_check<F>(f: F, params: &[Tensor], step: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if step.is_nan() || step <= 0.0 {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = ps.iter().map(|p| tape.param(p.clone())).collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.numel() != 1 {
            return Err(Error::Shape { op: "finite_difference_check", shapes: vec![v.shape().to_vec()] });
        }
        Ok(v.item())
    };

    let first = eval(params)?;
    let second = eval(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let mut tape = Tape::new();
    let vars = params.iter().map(|p| tape.param(p.clone())).collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| tape.grad(v)).collect();

    let mut work = params.to_vec();
    let mut report = GradCheck { max_relative_error: 0.0, worst: None, worst_values: None, entries_checked: 0 };
    for (pi, grad) in analytic.iter().enumerate() {
        for e in 0..grad.numel() {
            let orig = work[pi].data()[e];
            work[pi].data_mut()[e] = orig + step;
            let plus = eval(&work)?;
            work[pi].data_mut()[e] = orig - step;
            let minus = eval(&work)?;
            work[pi].data_mut()[e] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let a = grad.data()[e];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.entries_checked += 1;
            if rel > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = rel.max(report.max_relative_error);
                report.worst = Some((pi, e));
                report.worst_values = Some((a, numeric));
            }
        }
    }
    Ok(report)
}
