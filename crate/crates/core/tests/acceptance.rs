//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.
//!
//! Run with `cargo test -p sasicm --test acceptance -- --nocapture` to see
//! the lines.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;

use sasicm::annotation::{simulate_reliability, tae_from_means, SimulationConfig};
use sasicm::data::{generate_synthetic_corpus, stratified_split, LabeledExample, Split, SyntheticConfig};
use sasicm::evaluation::{gbp_baseline, representation_similarity};
use sasicm::model::params::{ATT_C, ATT_T};
use sasicm::model::{recurrent_encode, strengthen_attention, AttentionKind, Model, ModelConfig, ParameterStore, RecurrentKind, Variant};
use sasicm::numerics::{Mask, Tape, Tensor};
use sasicm::run::{self, RunConfig, GRADCHECK_TOLERANCE, HISTORY_FILE};
use sasicm::seed;
use sasicm::task::{Label, Task};
use sasicm::training::{cross_validate, evaluate, fit, penalty_values, toy_gradient_check, ToyDims, TrainConfig, TrainHistory, VocabOptions};

fn report(n: u32, pass: bool, detail: impl AsRef<str>) {
    println!("criterion {n}: {} ({})", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_01_gradient_check() {
    let t0 = Instant::now();
    let g = toy_gradient_check(ToyDims { length: 5, d_e: 8, d_h: 4 }, &ModelConfig::default(), 1).unwrap();
    let elapsed = t0.elapsed();
    let pass = g.max_relative_error < GRADCHECK_TOLERANCE && elapsed < Duration::from_secs(60);
    report(1, pass, format!("max relative error {:.2e} over {} entries in {elapsed:.2?}", g.max_relative_error, g.entries_checked));
    assert!(pass);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_tae_closed_form() {
    let top = tae_from_means(1.0, 0.0);
    let bottom = tae_from_means(0.0, 1.0);
    // 50-digit evaluation of (exp(0.6) - 1/e) / (e - 1/e)
    let oracle = 0.618_719_316_779_319_3;
    let mid = tae_from_means(0.8, 0.2);
    let n = 21;
    let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let mut monotone = true;
    for &a in &grid {
        for w in grid.windows(2) {
            monotone &= tae_from_means(a, w[1]) < tae_from_means(a, w[0]);
            monotone &= tae_from_means(w[1], a) > tae_from_means(w[0], a);
        }
    }
    let pass = (top - 1.0).abs() < 1e-12 && bottom.abs() < 1e-12 && (mid - oracle).abs() < 1e-9 && monotone;
    report(2, pass, format!("TAE(1,0)={top}, TAE(0,1)={bottom}, TAE(0.8,0.2)={mid:.12}, monotone on 21x21 grid: {monotone}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_reliability_curves() {
    let t0 = Instant::now();
    let levels: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let rates = [0.05, 0.1, 0.2, 0.5];
    let curves: Vec<_> = rates
        .iter()
        .enumerate()
        .map(|(k, &p)| simulate_reliability(&SimulationConfig::new(p, levels.clone(), 10_000, seed::derive(100_000, &[k as u64]))).unwrap())
        .collect();
    let max_dev = curves.iter().flat_map(|c| c.rows.iter()).map(|r| (r.accuracy - r.agreement).abs()).fold(0.0, f64::max);
    let at = |c: &sasicm::annotation::ReliabilityCurve, level: f64| c.rows.iter().find(|r| (r.agreement - level).abs() < 1e-12).unwrap().tae;
    let tae_09: Vec<f64> = curves.iter().map(|c| at(c, 0.9)).collect();
    let spread = tae_09.iter().cloned().fold(f64::MIN, f64::max) - tae_09.iter().cloned().fold(f64::MAX, f64::min);
    let kappa = |p: f64| {
        let c = simulate_reliability(&SimulationConfig::new(p, vec![0.93], 10_000, 100_000)).unwrap();
        c.rows[0].kappa
    };
    let (k_rare, k_bal) = (kappa(0.05), kappa(0.5));
    let elapsed = t0.elapsed();
    let pass = max_dev < 0.02 && spread < 0.05 && k_bal - k_rare > 0.15 && elapsed < Duration::from_secs(120);
    report(
        3,
        pass,
        format!(
            "accuracy deviation {max_dev:.4}; TAE spread at 0.9 {spread:.4}; kappa at 0.93: {k_rare:.4} (pos 0.05) vs {k_bal:.4} (pos 0.5); {elapsed:.2?}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

/// Cohen's kappa between one first-round rater and the adjudicated label,
/// printed for comparison only.
fn cohen_vs_adjudicated(level: f64) -> f64 {
    let mut rng = seed::rng(7);
    let (n, mut agree) = (10_000, 0usize);
    let mut marg_a = [0usize; 3];
    let mut marg_b = [0usize; 3];
    for _ in 0..n {
        let truth = if rng.gen::<f64>() < 0.5 { 2 } else { 0 };
        let rater = if rng.gen::<f64>() < level {
            truth
        } else {
            let k = rng.gen_range(0..2);
            if k >= truth {
                k + 1
            } else {
                k
            }
        };
        agree += (rater == truth) as usize;
        marg_a[truth] += 1;
        marg_b[rater] += 1;
    }
    let po = agree as f64 / n as f64;
    let pe: f64 = (0..3).map(|i| marg_a[i] as f64 * marg_b[i] as f64).sum::<f64>() / (n * n) as f64;
    (po - pe) / (1.0 - pe)
}

#[test]
fn criterion_04_tae_anchor() {
    let levels: Vec<f64> = (0..=200).map(|i| 0.5 + i as f64 * 0.0025).collect();
    let curve = simulate_reliability(&SimulationConfig::new(0.5, levels, 10_000, 100_000)).unwrap();
    let near: Vec<_> = curve.rows.iter().filter(|r| (r.kappa - 0.60).abs() <= 0.02).collect();
    let in_band = near.iter().filter(|r| (0.48..=0.58).contains(&r.tae)).count();
    let pass = !near.is_empty() && in_band == near.len();
    let (lo, hi) = near.iter().fold((f64::MAX, f64::MIN), |(lo, hi), r| (lo.min(r.tae), hi.max(r.tae)));
    let agr = near.iter().map(|r| r.agreement).sum::<f64>() / near.len().max(1) as f64;
    report(
        4,
        pass,
        format!("{} agreement levels with Fleiss kappa in 0.60 +/- 0.02 (mean agreement {agr:.3}); TAE there spans [{lo:.4}, {hi:.4}], target [0.48, 0.58]", near.len()),
    );
    let cohen_level = (0..=400)
        .map(|i| 0.5 + i as f64 * 0.00125)
        .min_by(|a, b| (cohen_vs_adjudicated(*a) - 0.6).abs().total_cmp(&(cohen_vs_adjudicated(*b) - 0.6).abs()))
        .unwrap();
    let records = sasicm::annotation::simulate_records(&SimulationConfig::new(0.5, vec![], 10_000, 1), cohen_level, 1);
    let (a, r) = sasicm::annotation::mean_agreement_randomness(&records).unwrap();
    println!(
        "  info: with Cohen's kappa of one rater against the adjudicated label, kappa 0.60 sits at agreement {cohen_level:.3} where TAE = {:.4}",
        tae_from_means(a, r)
    );
    assert!(pass);
}

// ---------------------------------------------------------------- shared training runs

const SEEDS: [u64; 3] = [100_000, 100_001, 100_002];

fn base_config() -> ModelConfig {
    ModelConfig { d_e: 32, d_h: 16, ..Default::default() }
}

fn train_config(seed_value: u64) -> TrainConfig {
    TrainConfig { max_epochs: 20, seed: seed_value, ..Default::default() }
}

struct Run {
    variant: Variant,
    seed: u64,
    model: Model,
    history: TrainHistory,
    elapsed: Duration,
    test_f1: f64,
}

struct Shared {
    split: Split,
    runs: Vec<Run>,
}

impl Shared {
    fn run(&self, variant: Variant, seed_value: u64) -> &Run {
        self.runs.iter().find(|r| r.variant == variant && r.seed == seed_value).unwrap()
    }
}

fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(|| {
        let corpus = generate_synthetic_corpus(&SyntheticConfig::default()).unwrap();
        let split = stratified_split(&corpus, 0.2, 0.2, 100_000).unwrap();
        let mut jobs: Vec<(Variant, u64)> = SEEDS.iter().flat_map(|&s| [Variant::Sasicm, Variant::Sa, Variant::Wc].map(|v| (v, s))).collect();
        jobs.push((Variant::St, SEEDS[0]));
        let runs = std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|&(variant, s)| {
                    let split = &split;
                    scope.spawn(move || {
                        let t0 = Instant::now();
                        let (model, history) =
                            fit(&variant.apply(&base_config()), &VocabOptions::default(), &split.train, &split.val, &train_config(s), None).unwrap();
                        let elapsed = t0.elapsed();
                        let test_f1 = evaluate(&model, &split.test).unwrap().get(Task::Subtext).unwrap().f1;
                        Run { variant, seed: s, model, history, elapsed, test_f1 }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        Shared { split, runs }
    })
}

fn labels(examples: &[LabeledExample], task: Task) -> Vec<Label> {
    examples.iter().map(|e| e.label(task)).collect()
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_learning_capability() {
    let s = shared();
    let run = s.run(Variant::Sasicm, SEEDS[0]);
    let best = run.history.best();
    let gbp = gbp_baseline(&labels(&s.split.train, Task::Subtext), &labels(&s.split.val, Task::Subtext), 100_000, 100).unwrap();
    let margin = best.val_f1 - gbp.f1;
    let pass = best.val_f1 >= 0.85 && run.history.epochs_run() <= 20 && margin >= 0.15 && run.elapsed < Duration::from_secs(15 * 60);
    report(
        5,
        pass,
        format!(
            "best validation weighted-F1 {:.4} at epoch {} of {}; GBP {:.4}; margin {:.1} points; {:.2?}",
            best.val_f1,
            run.history.best_epoch,
            run.history.epochs_run(),
            gbp.f1,
            100.0 * margin,
            run.elapsed
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_constraints_bind() {
    let s = shared();
    let run = s.run(Variant::Sasicm, SEEDS[0]);
    let p = penalty_values(&run.model.params, &run.model.config).unwrap();
    let wc = s.run(Variant::Wc, SEEDS[0]);
    let cfg = &wc.model.config;
    let t = wc.model.params.get(ATT_T).unwrap().data();
    let c = wc.model.params.get(ATT_C).unwrap().data();
    let t_min = t.iter().cloned().fold(f64::MAX, f64::min);
    let (c_min, c_max) = c.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let binds = t_min < cfg.w_thr || c_min < cfg.epsilon || c_max > 1.0;
    let pass = p.c_upper < 1e-3 && p.c_lower < 1e-3 && p.t_lower < 1e-3 && binds;
    report(
        6,
        pass,
        format!(
            "penalties c_upper {:.2e}, c_lower {:.2e}, t_lower {:.2e}; unconstrained run: min t {t_min:.4}, c in [{c_min:.4}, {c_max:.4}]",
            p.c_upper, p.c_lower, p.t_lower
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_07_ablation_ordering() {
    let s = shared();
    let mean = |v: Variant| SEEDS.iter().map(|&k| s.run(v, k).test_f1).sum::<f64>() / SEEDS.len() as f64;
    let (full, sa, wc) = (mean(Variant::Sasicm), mean(Variant::Sa), mean(Variant::Wc));
    let tie = 0.005;
    let pass = full >= sa - tie && full >= wc - tie;
    report(7, pass, format!("3-seed mean test weighted-F1: sasicm {full:.4}, sa {sa:.4}, wc {wc:.4}"));
    for (name, other) in [("sa", sa), ("wc", wc)] {
        if (full - other).abs() < tie {
            println!("  warning: sasicm and {name} tie within 0.5 points ({:+.2} points)", 100.0 * (full - other));
        }
    }
    assert!(pass);
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_representation_similarity() {
    let s = shared();
    let emb = representation_similarity(&s.run(Variant::Sasicm, SEEDS[0]).model, 100, 7).unwrap();
    let rnn = representation_similarity(&s.run(Variant::St, SEEDS[0]).model, 100, 7).unwrap();
    let pass = emb < rnn;
    report(8, pass, format!("mean pairwise cosine: embedding source {emb:.4}, recurrent-output source {rnn:.4}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_attention_invariants() {
    let mut rng = seed::rng(9);
    let mut worst_sum = 0.0f64;
    let mut masked_nonzero = 0usize;
    for i in 0..1000 {
        let b = rng.gen_range(1..5);
        let l = rng.gen_range(1..9);
        let d_e = rng.gen_range(1..7);
        let attention = if i % 2 == 0 { AttentionKind::Strengthen } else { AttentionKind::PlainSelf };
        let config = ModelConfig { d_e, d_h: rng.gen_range(1..5), attention, ..Default::default() };
        let mut p = ParameterStore::init(&config, 4, l, None, i).unwrap();
        p.insert(ATT_C, Tensor::uniform(&[l], -0.5, 1.5, &mut rng));
        p.insert(ATT_T, Tensor::uniform(&[l], 0.0, 20.0, &mut rng));
        let lengths: Vec<usize> = (0..b).map(|_| rng.gen_range(1..=l)).collect();
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape).unwrap();
        let x = tape.constant(Tensor::uniform(&[b, l, d_e], -3.0, 3.0, &mut rng)).unwrap();
        let mask = Mask::from_lengths(&lengths, l).unwrap();
        let (_, att) = strengthen_attention(&mut tape, x, &bound, &mask, &config).unwrap();
        let a = tape.value(att);
        for (bi, &len) in lengths.iter().enumerate() {
            for q in 0..l {
                let sum: f64 = (0..len).map(|k| a.get(&[bi, q, k])).sum();
                worst_sum = worst_sum.max((sum - 1.0).abs());
                masked_nonzero += (len..l).filter(|&k| a.get(&[bi, q, k]) != 0.0).count();
            }
        }
    }

    let mut bitwise = true;
    for kind in [RecurrentKind::Gru, RecurrentKind::Lstm] {
        let config = ModelConfig { d_e: 4, d_h: 3, recurrent: kind, ..Default::default() };
        let p = ParameterStore::init(&config, 5, 6, None, 3).unwrap();
        let short = Tensor::uniform(&[3, 6, 4], -1.0, 1.0, &mut rng);
        let lengths = [6, 2, 4];
        let encode = |x: Tensor, width: usize| {
            let mut tape = Tape::new();
            let bound = p.bind(&mut tape).unwrap();
            let x = tape.constant(x).unwrap();
            let rec = recurrent_encode(&mut tape, x, &bound, &Mask::from_lengths(&lengths, width).unwrap(), &config).unwrap();
            tape.value(rec.h_c).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        let mut padded = vec![0.0; 3 * 10 * 4];
        for b in 0..3 {
            padded[b * 40..b * 40 + 24].copy_from_slice(&short.data()[b * 24..(b + 1) * 24]);
        }
        bitwise &= encode(short.clone(), 6) == encode(Tensor::new(vec![3, 10, 4], padded).unwrap(), 10);
    }
    let pass = worst_sum <= 1e-6 && masked_nonzero == 0 && bitwise;
    report(
        9,
        pass,
        format!("1000 batches: worst row-sum error {worst_sum:.2e}, nonzero masked weights {masked_nonzero}; padding invariance bitwise: {bitwise}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.jsonl");
    run::data_gen(&SyntheticConfig { n: 300, vocab_size: 40, min_len: 4, max_len: 8, ..Default::default() }, &corpus_path).unwrap();
    let rc = RunConfig {
        corpus: Some(corpus_path.clone()),
        model: ModelConfig { d_e: 8, d_h: 4, ..Default::default() },
        train: TrainConfig { max_epochs: 3, ..Default::default() },
        ..Default::default()
    };
    let history = |name: &str| {
        let out = dir.path().join(name);
        run::train_cmd(&rc, &out).unwrap();
        std::fs::read(out.join(HISTORY_FILE)).unwrap()
    };
    let same_history = history("a") == history("b");

    let corpus = sasicm::data::load_corpus(&corpus_path).unwrap();
    let cfg = ModelConfig { d_e: 4, d_h: 2, tasks: vec![Task::Subtext], ..Default::default() };
    let tc = TrainConfig { max_epochs: 1, repeats: 5, folds: 5, ..Default::default() };
    let a = cross_validate(&corpus, &cfg, &VocabOptions::default(), &tc).unwrap();
    let b = cross_validate(&corpus, &cfg, &VocabOptions::default(), &tc).unwrap();
    let pass = same_history && a.runs == 25 && a.repeats == 5 && a == b;
    report(10, pass, format!("identical history CSVs: {same_history}; cv runs {} over {} repeats, seed-stable: {}", a.runs, a.repeats, a == b));
    assert!(pass);
}
