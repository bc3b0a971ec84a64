use proptest::prelude::*;
use rand::Rng;
use sasicm::annotation::{
    agreement, fleiss_kappa, mean_agreement_randomness, randomness, rating_counts, simulate_reliability, tae_from_means, tae_score,
    AnnotationRecord, SimulationConfig,
};
use sasicm::seed;

fn record() -> impl Strategy<Value = AnnotationRecord> {
    (proptest::collection::vec(-1i64..=1, 1..6), -1i64..=1).prop_map(|(first, adj)| AnnotationRecord::new(first, adj).unwrap())
}

fn rated_record() -> impl Strategy<Value = AnnotationRecord> {
    (proptest::collection::vec(0i64..3, 3), 0i64..3).prop_map(|(first, adj)| AnnotationRecord::new(first, adj).unwrap())
}

proptest! {
    #[test]
    fn tae_is_bounded(records in proptest::collection::vec(record(), 1..40)) {
        let t = tae_score(&records).unwrap();
        prop_assert!((0.0..=1.0).contains(&t), "{}", t);
    }

    #[test]
    fn per_record_scores_in_unit_interval(r in record()) {
        prop_assert!((0.0..=1.0).contains(&agreement(&r)));
        prop_assert!((0.0..1.0).contains(&randomness(&r)));
    }

    #[test]
    fn equal_agreement_and_randomness(x in 0.0f64..=1.0) {
        // (1 - 1/e) / (e - 1/e) to 30 digits
        prop_assert!((tae_from_means(x, x) - 0.268_941_421_369_995_1).abs() < 1e-12);
    }

    #[test]
    fn tae_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, r in 0.0f64..1.0, d in 1e-6f64..0.5) {
        prop_assert!(tae_from_means((a + d).min(1.0), r) > tae_from_means(a, r) || a + d > 1.0);
        prop_assert!(tae_from_means(b, (r + d).min(1.0)) < tae_from_means(b, r) || r + d > 1.0);
    }

    #[test]
    fn kappa_in_range(records in proptest::collection::vec(rated_record(), 2..60)) {
        let k = fleiss_kappa(&rating_counts(&records, 3).unwrap()).unwrap();
        prop_assert!((-1.0..=1.0).contains(&k), "{}", k);
    }
}

#[test]
fn fleiss_near_zero_for_independent_ratings() {
    let mut rng = seed::rng(3);
    let counts: Vec<Vec<usize>> = (0..10_000)
        .map(|_| {
            let mut row = vec![0; 2];
            (0..3).for_each(|_| row[rng.gen_range(0..2)] += 1);
            row
        })
        .collect();
    let k = fleiss_kappa(&counts).unwrap();
    assert!(k.abs() < 0.05, "{k}");
}

#[test]
fn tae_independent_of_positive_rate() {
    let levels: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let curves: Vec<_> =
        [0.05, 0.1, 0.2, 0.5].iter().map(|&p| simulate_reliability(&SimulationConfig::new(p, levels.clone(), 10_000, 17)).unwrap()).collect();
    for (i, level) in levels.iter().enumerate() {
        let t: Vec<f64> = curves.iter().map(|c| c.rows[i].tae).collect();
        let spread = t.iter().cloned().fold(f64::MIN, f64::max) - t.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 0.05, "level {level}: {t:?}");
    }
}

#[test]
fn simulation_reproducible_and_consistent() {
    let cfg = SimulationConfig::new(0.2, vec![0.3, 0.7, 1.0], 500, 5);
    let a = simulate_reliability(&cfg).unwrap();
    assert_eq!(a, simulate_reliability(&cfg).unwrap());
    let records = sasicm::annotation::simulate_records(&cfg, 0.7, seed::derive(5, &[1]));
    let (agr, rad) = mean_agreement_randomness(&records).unwrap();
    assert_eq!(a.rows[1].accuracy, agr);
    assert_eq!(a.rows[1].tae, tae_from_means(agr, rad));
}
