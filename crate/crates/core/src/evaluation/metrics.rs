use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{Label, Task};

/// Support-weighted classification metrics for one task.
///
/// `confusion[g][p]` counts examples with gold class `g` predicted as `p`,
/// both in class-index order (-1, 0, 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub confusion: [[usize; 3]; 3],
    pub support: [usize; 3],
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(pred: &[Label], gold: &[Label]) -> Result<TaskMetrics> {
    if pred.len() != gold.len() || gold.is_empty() {
        return Err(Error::invalid(format!("metrics need equal nonempty lengths, got {} predictions and {} gold", pred.len(), gold.len())));
    }
    let mut confusion = [[0usize; 3]; 3];
    for (p, g) in pred.iter().zip(gold) {
        confusion[g.class_index()][p.class_index()] += 1;
    }
    let n = gold.len();
    let support: [usize; 3] = std::array::from_fn(|c| confusion[c].iter().sum());
    let (mut precision, mut recall, mut f1) = (0.0, 0.0, 0.0);
    for c in 0..3 {
        let tp = confusion[c][c];
        let predicted: usize = (0..3).map(|g| confusion[g][c]).sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, support[c]);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let w = support[c] as f64 / n as f64;
        precision += w * p;
        recall += w * r;
        f1 += w * f;
    }
    let accuracy = ratio((0..3).map(|c| confusion[c][c]).sum(), n);
    Ok(TaskMetrics { precision, recall, f1, accuracy, confusion, support })
}

/// Metrics per task.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tasks: BTreeMap<Task, TaskMetrics>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "task,precision,recall,f1,accuracy,support_neg,support_unsure,support_pos";

    pub fn get(&self, task: Task) -> Result<&TaskMetrics> {
        self.tasks.get(&task).ok_or_else(|| Error::invalid(format!("no metrics for {task}")))
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for (task, m) in &self.tasks {
            let _ = writeln!(
                s,
                "{task},{},{},{},{},{},{},{}",
                m.precision, m.recall, m.f1, m.accuracy, m.support[0], m.support[1], m.support[2]
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<10} {:>9} {:>9} {:>9} {:>9}\n", "task", "precision", "recall", "f1", "accuracy");
        for (task, m) in &self.tasks {
            let _ = writeln!(
                s,
                "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                task.name(),
                m.precision,
                m.recall,
                m.f1,
                m.accuracy
            );
        }
        s
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub accuracy: MeanStd,
}

/// Cross-validation summary: means over every run, standard deviations of
/// the per-repeat means across repeats.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub repeats: usize,
    pub tasks: BTreeMap<Task, AggregateMetrics>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

impl AggregateReport {
    pub const CSV_HEADER: &'static str =
        "task,runs,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std,accuracy_mean,accuracy_std";

    /// `runs[r]` holds the fold reports of repeat `r`.
    pub fn from_runs(runs: &[Vec<MetricsReport>]) -> Result<Self> {
        let total: usize = runs.iter().map(Vec::len).sum();
        if total == 0 || runs.iter().any(Vec::is_empty) {
            return Err(Error::invalid("aggregate over zero runs"));
        }
        let tasks: Vec<Task> = runs[0][0].tasks.keys().copied().collect();
        let mut out = AggregateReport { runs: total, repeats: runs.len(), tasks: BTreeMap::new() };
        for task in tasks {
            let field = |f: fn(&TaskMetrics) -> f64| -> Result<MeanStd> {
                let mut all = Vec::new();
                let mut repeat_means = Vec::new();
                for rep in runs {
                    let vals = rep.iter().map(|r| r.get(task).map(f)).collect::<Result<Vec<f64>>>()?;
                    repeat_means.push(mean(&vals));
                    all.extend(vals);
                }
                Ok(MeanStd { mean: mean(&all), std: std_dev(&repeat_means) })
            };
            let agg = AggregateMetrics {
                precision: field(|m| m.precision)?,
                recall: field(|m| m.recall)?,
                f1: field(|m| m.f1)?,
                accuracy: field(|m| m.accuracy)?,
            };
            out.tasks.insert(task, agg);
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for (task, a) in &self.tasks {
            let _ = writeln!(
                s,
                "{task},{},{},{},{},{},{},{},{},{}",
                self.runs,
                a.precision.mean,
                a.precision.std,
                a.recall.mean,
                a.recall.std,
                a.f1.mean,
                a.f1.std,
                a.accuracy.mean,
                a.accuracy.std
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn labels(v: &[i64]) -> Vec<Label> {
        v.iter().map(|&x| Label::try_from(x).unwrap()).collect()
    }

    #[test]
    fn hand_computed_example() {
        let m = compute_metrics(&labels(&[1, -1, -1, 0]), &labels(&[1, 1, -1, 0])).unwrap();
        assert!((m.f1 - 0.75).abs() < 1e-12);
        assert!((m.accuracy - 0.75).abs() < 1e-12);
        assert_eq!(m.support, [1, 1, 2]);
    }

    #[test]
    fn perfect_predictions() {
        let g = labels(&[1, 0, -1, 1]);
        let m = compute_metrics(&g, &g).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn absent_class_has_no_weight() {
        let m = compute_metrics(&labels(&[1, 1, -1]), &labels(&[1, -1, -1])).unwrap();
        assert_eq!(m.support[1], 0);
        let expect = (1.0 * (2.0 / 3.0) + 2.0 * (2.0 / 3.0)) / 3.0;
        assert!((m.f1 - expect).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_metrics(&labels(&[1]), &labels(&[1, 0])).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
    }

    /// Cell-by-cell recount of every quantity from the raw pairs.
    fn brute_force(pred: &[Label], gold: &[Label]) -> (f64, f64, f64, f64) {
        let n = gold.len() as f64;
        let (mut p_w, mut r_w, mut f_w) = (0.0, 0.0, 0.0);
        for c in Label::ALL {
            let tp = pred.iter().zip(gold).filter(|(p, g)| **p == c && **g == c).count() as f64;
            let fp = pred.iter().zip(gold).filter(|(p, g)| **p == c && **g != c).count() as f64;
            let fn_ = pred.iter().zip(gold).filter(|(p, g)| **p != c && **g == c).count() as f64;
            let support = tp + fn_;
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if support > 0.0 { tp / support } else { 0.0 };
            let f = if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fn_) } else { 0.0 };
            p_w += support / n * p;
            r_w += support / n * r;
            f_w += support / n * f;
        }
        let acc = pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / n;
        (p_w, r_w, f_w, acc)
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = crate::seed::rng(77);
        for _ in 0..1000 {
            let n = rng.gen_range(1..40);
            let gold: Vec<Label> = (0..n).map(|_| Label::ALL[rng.gen_range(0..3)]).collect();
            let pred: Vec<Label> = (0..n).map(|_| Label::ALL[rng.gen_range(0..3)]).collect();
            let m = compute_metrics(&pred, &gold).unwrap();
            let (p, r, f, a) = brute_force(&pred, &gold);
            for (x, y) in [(m.precision, p), (m.recall, r), (m.f1, f), (m.accuracy, a)] {
                assert!((x - y).abs() < 1e-12);
            }
            assert!((0.0..=1.0).contains(&m.f1));
            let trace: usize = (0..3).map(|c| m.confusion[c][c]).sum();
            assert_eq!(m.accuracy, trace as f64 / n as f64);
        }
    }

    #[test]
    fn weighted_equals_macro_with_equal_supports() {
        let gold = labels(&[-1, -1, 0, 0, 1, 1]);
        let pred = labels(&[-1, 0, 0, 1, 1, 1]);
        let m = compute_metrics(&pred, &gold).unwrap();
        let per_class = |c: Label| {
            let tp = pred.iter().zip(&gold).filter(|(p, g)| **p == c && **g == c).count() as f64;
            let pc = pred.iter().filter(|p| **p == c).count() as f64;
            let (p, r) = (tp / pc, tp / 2.0);
            2.0 * p * r / (p + r)
        };
        let macro_f1 = Label::ALL.iter().map(|&c| per_class(c)).sum::<f64>() / 3.0;
        assert!((m.f1 - macro_f1).abs() < 1e-12);
    }

    #[test]
    fn aggregate_mean_and_std() {
        let g = labels(&[1, 0]);
        let good = compute_metrics(&g, &g).unwrap();
        let bad = compute_metrics(&labels(&[0, 1]), &g).unwrap();
        let rep = |m: &TaskMetrics| MetricsReport { tasks: [(Task::Subtext, m.clone())].into() };
        let runs = vec![vec![rep(&good), rep(&bad)], vec![rep(&good), rep(&good)]];
        let agg = AggregateReport::from_runs(&runs).unwrap();
        let acc = agg.tasks[&Task::Subtext].accuracy;
        assert_eq!(agg.runs, 4);
        assert!((acc.mean - 0.75).abs() < 1e-12);
        // repeat means 0.5 and 1.0
        assert!((acc.std - (0.125f64).sqrt()).abs() < 1e-12);
    }
}
