//! Fixing length, stratified train/val/test splits and k-fold partitions.
//!
//! Stratification is always on the subtext label.

use rand::seq::SliceRandom;

use super::corpus::LabeledExample;
use crate::error::{Error, Result};
use crate::seed;
use crate::task::Label;

/// Minimum members a present subtext class needs before it can be split.
pub const MIN_CLASS_COUNT: usize = 5;

/// Nearest-rank 99th percentile: element `ceil(0.99 n) - 1` of the sorted list.
pub fn compute_fixing_length(lengths: &[usize]) -> Result<usize> {
    if lengths.is_empty() {
        return Err(Error::invalid("fixing length of an empty length list"));
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    // integer form of ceil(0.99 * n) avoids 0.99 * 100 = 98.99999...
    let rank = (99 * sorted.len()).div_ceil(100);
    Ok(sorted[rank.max(1) - 1])
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Vec<LabeledExample>,
    pub val: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

#[derive(Clone, Debug)]
pub struct Fold {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if !(0.0..1.0).contains(&f) {
        return Err(Error::invalid(format!("{name} {f} outside [0,1)")));
    }
    Ok(())
}

/// Shuffled index groups per subtext class, in class order (-1, 0, 1).
fn class_groups(examples: &[LabeledExample], rng: &mut seed::Rng) -> Result<Vec<Vec<usize>>> {
    let mut groups = vec![Vec::new(); 3];
    for (i, e) in examples.iter().enumerate() {
        groups[e.subtext.class_index()].push(i);
    }
    for (c, g) in groups.iter_mut().enumerate() {
        if !g.is_empty() && g.len() < MIN_CLASS_COUNT {
            return Err(Error::Data(format!(
                "subtext class {} has {} examples, need at least {MIN_CLASS_COUNT}",
                Label::ALL[c],
                g.len()
            )));
        }
        g.shuffle(rng);
    }
    Ok(groups)
}

/// Per-class split: `round(n_c * test_fraction)` of each subtext class goes
/// to test, then `round(rest * val_fraction)` to validation. The training
/// part is shuffled with the same seed.
pub fn stratified_split(examples: &[LabeledExample], test_fraction: f64, val_fraction: f64, seed: u64) -> Result<Split> {
    check_fraction("test_fraction", test_fraction)?;
    check_fraction("val_fraction", val_fraction)?;
    let mut rng = seed::rng(seed);
    let groups = class_groups(examples, &mut rng)?;
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for g in &groups {
        let n_test = (g.len() as f64 * test_fraction).round() as usize;
        let rest = g.len() - n_test;
        let n_val = (rest as f64 * val_fraction).round() as usize;
        test.extend(g[..n_test].iter().map(|&i| examples[i].clone()));
        val.extend(g[n_test..n_test + n_val].iter().map(|&i| examples[i].clone()));
        train.extend(g[n_test + n_val..].iter().map(|&i| examples[i].clone()));
    }
    train.shuffle(&mut rng);
    Ok(Split { train, val, test })
}

/// Stratified k-fold partition. Class groups are concatenated and dealt
/// round-robin, so every fold holds `floor` or `ceil` of `n_c / k` of each
/// class.
pub fn kfold(examples: &[LabeledExample], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    if examples.len() < k {
        return Err(Error::Data(format!("{} examples cannot fill {k} folds", examples.len())));
    }
    let mut rng = seed::rng(seed);
    let order: Vec<usize> = class_groups(examples, &mut rng)?.into_iter().flatten().collect();
    let mut assignment = vec![0usize; examples.len()];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<_>, Vec<_>) = order.iter().map(|&i| (i, assignment[i] == f)).partition(|&(_, t)| t);
            Fold {
                train: train.into_iter().map(|(i, _)| examples[i].clone()).collect(),
                test: test.into_iter().map(|(i, _)| examples[i].clone()).collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn corpus(counts: [usize; 3]) -> Vec<LabeledExample> {
        let mut out = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                let id = out.len();
                out.push(LabeledExample::new(format!("e{id}"), "x", [Label::ALL[c]; 3]));
            }
        }
        out
    }

    fn class_counts(v: &[LabeledExample]) -> [usize; 3] {
        let mut c = [0; 3];
        v.iter().for_each(|e| c[e.subtext.class_index()] += 1);
        c
    }

    #[test]
    fn fixing_length_nearest_rank() {
        let v: Vec<usize> = (1..=100).collect();
        assert_eq!(compute_fixing_length(&v).unwrap(), 99);
        assert_eq!(compute_fixing_length(&[5]).unwrap(), 5);
        assert_eq!(compute_fixing_length(&[3, 3, 3, 100]).unwrap(), 100);
        assert!(compute_fixing_length(&[]).is_err());
    }

    #[test]
    fn exact_stratification() {
        // the corpus lists counts in class order (-1, 0, 1) = (10, 20, 70) here
        let c = corpus([10, 20, 70]);
        let s = stratified_split(&c, 0.2, 0.2, 1).unwrap();
        assert_eq!(class_counts(&s.test), [2, 4, 14]);
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 100);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let c = corpus([30, 10, 20]);
        let a = stratified_split(&c, 0.2, 0.2, 5).unwrap();
        let b = stratified_split(&c, 0.2, 0.2, 5).unwrap();
        let ids = |v: &[LabeledExample]| v.iter().map(|e| e.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a.train), ids(&b.train));
        assert_eq!(ids(&a.test), ids(&b.test));
        let tr: HashSet<_> = ids(&a.train).into_iter().collect();
        let va: HashSet<_> = ids(&a.val).into_iter().collect();
        let te: HashSet<_> = ids(&a.test).into_iter().collect();
        assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
    }

    #[test]
    fn zero_test_fraction() {
        let s = stratified_split(&corpus([10, 10, 10]), 0.0, 0.2, 1).unwrap();
        assert!(s.test.is_empty());
    }

    #[test]
    fn rare_class_rejected() {
        let err = stratified_split(&corpus([10, 3, 10]), 0.2, 0.2, 1).unwrap_err();
        assert!(err.to_string().contains("class 0"), "{err}");
    }

    #[test]
    fn kfold_partition() {
        let c = corpus([5, 0, 5]);
        let folds = kfold(&c, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        assert!(folds.iter().all(|f| f.test.len() == 2 && f.train.len() == 8));
        let union: HashSet<_> = folds.iter().flat_map(|f| f.test.iter().map(|e| e.id.clone())).collect();
        assert_eq!(union.len(), 10);
        assert!(kfold(&corpus([2, 0, 2]), 5, 3).is_err());
    }

    #[test]
    fn kfold_class_ratios_within_one() {
        let c = corpus([23, 9, 41]);
        let k = 5;
        for f in kfold(&c, k, 11).unwrap() {
            let got = class_counts(&f.test);
            for (cls, &n) in [23usize, 9, 41].iter().enumerate() {
                let expect = n as f64 / k as f64;
                assert!((got[cls] as f64 - expect).abs() <= 1.0, "class {cls}: {got:?}");
            }
        }
    }
}
