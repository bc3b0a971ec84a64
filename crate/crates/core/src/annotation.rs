//! Two-round annotation reliability: per-record agreement and randomness,
//! the TAE score built from them, Fleiss' kappa, and a simulator comparing
//! the metrics under controlled rater accuracy and class imbalance.

use std::collections::BTreeSet;
use std::f64::consts::E;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// First-round labels from independent annotators plus the second-round
/// adjudicated label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    first_round: Vec<i64>,
    adjudicated: i64,
}

impl AnnotationRecord {
    pub fn new(first_round: Vec<i64>, adjudicated: i64) -> Result<Self> {
        if first_round.is_empty() {
            return Err(Error::invalid("annotation record needs at least one first-round label"));
        }
        Ok(AnnotationRecord { first_round, adjudicated })
    }

    /// Checks every label against a declared label set.
    pub fn validate(&self, label_set: &[i64]) -> Result<()> {
        let bad = self.first_round.iter().chain(std::iter::once(&self.adjudicated)).find(|l| !label_set.contains(l));
        match bad {
            Some(l) => Err(Error::invalid(format!("label {l} not in declared set {label_set:?}"))),
            None => Ok(()),
        }
    }

    pub fn first_round(&self) -> &[i64] {
        &self.first_round
    }

    pub fn adjudicated(&self) -> i64 {
        self.adjudicated
    }
}

/// Fraction of first-round labels equal to the adjudicated label.
pub fn agreement(record: &AnnotationRecord) -> f64 {
    let hits = record.first_round.iter().filter(|&&l| l == record.adjudicated).count();
    hits as f64 / record.first_round.len() as f64
}

/// `|types(first) \ {adjudicated}| / |types(first) ∪ {adjudicated}|`.
pub fn randomness(record: &AnnotationRecord) -> f64 {
    let types: BTreeSet<i64> = record.first_round.iter().copied().collect();
    let extra = types.iter().filter(|&&l| l != record.adjudicated).count();
    let union = extra + 1;
    extra as f64 / union as f64
}

/// TAE closed form from mean agreement and mean randomness:
/// `(exp(agr - rad) - 1/e) / (e - 1/e)`.
pub fn tae_from_means(agr: f64, rad: f64) -> f64 {
    ((agr - rad).exp() - 1.0 / E) / (E - 1.0 / E)
}

pub fn tae_score(records: &[AnnotationRecord]) -> Result<f64> {
    let (agr, rad) = mean_agreement_randomness(records)?;
    Ok(tae_from_means(agr, rad))
}

pub fn mean_agreement_randomness(records: &[AnnotationRecord]) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::invalid("TAE of an empty record list"));
    }
    let n = records.len() as f64;
    let agr = records.iter().map(agreement).sum::<f64>() / n;
    let rad = records.iter().map(randomness).sum::<f64>() / n;
    Ok((agr, rad))
}

/// Fleiss' kappa over an items × categories matrix of rating counts.
///
/// Every row must sum to the same rater count `r >= 2`. When the expected
/// agreement is 1 (one category used everywhere) the result is 1.
pub fn fleiss_kappa(counts: &[Vec<usize>]) -> Result<f64> {
    let first = counts.first().ok_or_else(|| Error::invalid("fleiss kappa of zero items"))?;
    let k = first.len();
    let r: usize = first.iter().sum();
    if r < 2 {
        return Err(Error::invalid(format!("fleiss kappa needs at least 2 raters per item, got {r}")));
    }
    let mut totals = vec![0usize; k];
    let mut p_bar = 0.0;
    for (i, row) in counts.iter().enumerate() {
        if row.len() != k || row.iter().sum::<usize>() != r {
            return Err(Error::invalid(format!("item {i}: rating counts do not sum to {r} over {k} categories")));
        }
        let sq: usize = row.iter().map(|c| c * c).sum();
        p_bar += (sq - r) as f64 / (r * (r - 1)) as f64;
        totals.iter_mut().zip(row).for_each(|(t, c)| *t += c);
    }
    let n = counts.len() as f64;
    p_bar /= n;
    let p_e: f64 = totals.iter().map(|&t| (t as f64 / (n * r as f64)).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Rating-count matrix from the first-round labels of each record; labels
/// must be class indices `0..n_classes`.
pub fn rating_counts(records: &[AnnotationRecord], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    records
        .iter()
        .map(|rec| {
            let mut row = vec![0usize; n_classes];
            for &l in &rec.first_round {
                let idx = usize::try_from(l).ok().filter(|&i| i < n_classes);
                let idx = idx.ok_or_else(|| Error::invalid(format!("label {l} is not a class index below {n_classes}")))?;
                row[idx] += 1;
            }
            Ok(row)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub agreement: f64,
    pub pos_rate: f64,
    pub kappa: f64,
    pub accuracy: f64,
    pub tae: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityCurve {
    pub rows: Vec<ReliabilityRow>,
}

impl ReliabilityCurve {
    pub const CSV_HEADER: &'static str = "agreement,pos_rate,kappa,accuracy,tae";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.agreement, r.pos_rate, r.kappa, r.accuracy, r.tae);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub pos_rate: f64,
    pub agreement_levels: Vec<f64>,
    pub n_items: usize,
    pub n_raters: usize,
    pub n_classes: usize,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(pos_rate: f64, agreement_levels: Vec<f64>, n_items: usize, seed: u64) -> Self {
        SimulationConfig { pos_rate, agreement_levels, n_items, n_raters: 3, n_classes: 3, seed }
    }
}

pub const MIN_SIMULATION_ITEMS: usize = 100;

/// Simulated annotation records for one agreement level.
///
/// Classes are indices `0..n_classes`; the adjudicated label is the last
/// class with probability `pos_rate` and class 0 otherwise. Each first-round
/// rater copies it with probability `level`, else picks uniformly among the
/// other classes.
pub fn simulate_records(cfg: &SimulationConfig, level: f64, seed: u64) -> Vec<AnnotationRecord> {
    let mut rng = seed::rng(seed);
    let positive = (cfg.n_classes - 1) as i64;
    (0..cfg.n_items)
        .map(|_| {
            let truth = if rng.gen::<f64>() < cfg.pos_rate { positive } else { 0 };
            let first = (0..cfg.n_raters)
                .map(|_| {
                    if rng.gen::<f64>() < level {
                        truth
                    } else {
                        let k = rng.gen_range(0..cfg.n_classes as i64 - 1);
                        if k >= truth {
                            k + 1
                        } else {
                            k
                        }
                    }
                })
                .collect();
            AnnotationRecord { first_round: first, adjudicated: truth }
        })
        .collect()
}

/// Kappa (Fleiss over first-round raters), accuracy (mean agreement) and TAE
/// at every agreement level. Each level draws from its own seed derived from
/// `(seed, level index)`, so levels can run in parallel.
pub fn simulate_reliability(cfg: &SimulationConfig) -> Result<ReliabilityCurve> {
    if !(0.0..=1.0).contains(&cfg.pos_rate) {
        return Err(Error::invalid(format!("pos_rate {} outside [0,1]", cfg.pos_rate)));
    }
    if cfg.agreement_levels.is_empty() || cfg.agreement_levels.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::invalid("agreement grid must be nonempty with levels in [0,1]"));
    }
    if cfg.n_items < MIN_SIMULATION_ITEMS {
        return Err(Error::invalid(format!("need at least {MIN_SIMULATION_ITEMS} items, got {}", cfg.n_items)));
    }
    if cfg.n_raters < 2 || cfg.n_classes < 2 {
        return Err(Error::invalid("need at least 2 raters and 2 classes"));
    }
    let rows = cfg
        .agreement_levels
        .par_iter()
        .enumerate()
        .map(|(i, &level)| {
            let records = simulate_records(cfg, level, seed::derive(cfg.seed, &[i as u64]));
            let kappa = fleiss_kappa(&rating_counts(&records, cfg.n_classes)?)?;
            let (agr, rad) = mean_agreement_randomness(&records)?;
            Ok(ReliabilityRow { agreement: level, pos_rate: cfg.pos_rate, kappa, accuracy: agr, tae: tae_from_means(agr, rad) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReliabilityCurve { rows })
}
