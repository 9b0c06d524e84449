use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::*;
use crate::backend::{make_umda_mock, FnEngine, RecordingEngine, ReplayEngine, UmdaMock};

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn dist(v: &[f64]) -> MarginalDistribution {
    MarginalDistribution { p_one: v.to_vec() }
}

#[test]
fn explicit_marginals() {
    assert_eq!(umda_marginals(&strs(&["11", "11"])).unwrap().p_one, [1.0, 1.0]);
    assert_eq!(umda_marginals(&strs(&["01", "10"])).unwrap().p_one, [0.5, 0.5]);
    assert_eq!(umda_marginals(&strs(&["111", "110", "100", "100"])).unwrap().p_one, [1.0, 0.5, 0.25]);
    assert_eq!(umda_marginals(&[]), Err(AnalysisError::NoParents));
    assert_eq!(umda_marginals(&strs(&["1", "10"])), Err(AnalysisError::BadParents));
}

#[test]
fn differences() {
    let d = dist(&[1.0, 0.5, 0.25]);
    assert_eq!(mean_abs_diff(&d, &d).unwrap(), 0.0);
    assert_eq!(mean_abs_diff(&dist(&[0.0, 1.0]), &dist(&[1.0, 0.0])).unwrap(), 1.0);
    let got = mean_abs_diff(&d, &dist(&[1.0, 0.5, 0.75])).unwrap();
    assert!((got - 0.5 / 3.0).abs() < 1e-15);
    assert!(mean_abs_diff(&d, &dist(&[1.0])).is_err());
}

#[test]
fn implied_marginals_under_the_mock() {
    let engine = UmdaMock::from_prompt(Codec::Underscore);
    let mut rng = RngStream::new(0, "m");
    let t = PromptTemplate::default();
    let r = lmx_marginals(&strs(&["00", "00"]), &engine, &t, Codec::Underscore, &mut rng).unwrap();
    assert_eq!(r.marginals.p_one, [0.0, 0.0]);
    let plain = UmdaMock::from_prompt(Codec::Plain);
    let r = lmx_marginals(&strs(&["1"]), &plain, &t, Codec::Plain, &mut rng).unwrap();
    assert_eq!(r.marginals.p_one, [1.0]);
    let r = lmx_marginals(&strs(&["111", "110", "100", "100"]), &engine, &t, Codec::Underscore, &mut rng).unwrap();
    assert_eq!(r.marginals.p_one, [1.0, 0.5, 0.25]);
    // 0.5 at position 1 is a tie and commits '0'
    assert_eq!(r.committed, "100");
    assert!(!r.approximated);
}

#[test]
fn engines_without_probabilities_are_rejected() {
    let engine = FnEngine::constant("0101");
    let mut rng = RngStream::new(0, "m");
    let err = lmx_marginals(&strs(&["01"]), &engine, &PromptTemplate::default(), Codec::Plain, &mut rng);
    assert!(matches!(err, Err(AnalysisError::Engine(EngineError::Capability(_)))));
}

#[test]
fn mock_table_is_all_zero() {
    let engine = UmdaMock::from_prompt(Codec::Underscore);
    let rows = eda_compare_experiment(6, &[1, 2, 4, 8], 20, &engine, Codec::Underscore, 7).unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows {
        assert_eq!(r.repeats, 20);
        assert!(r.mean_abs_diff.abs() < 1e-12 && r.std_dev.abs() < 1e-12, "{r:?}");
    }
}

#[test]
fn eda_table_detects_a_biased_engine() {
    // Fixed marginals of 0.5 everywhere differ from most parent sets.
    let engine = make_umda_mock(&strs(&["000000", "111111"]), Codec::Plain).unwrap();
    let rows = eda_compare_experiment(6, &[4], 10, &engine, Codec::Plain, 1).unwrap();
    assert!(rows[0].mean_abs_diff > 0.05);
}

fn parent_set() -> impl Strategy<Value = Vec<String>> {
    (1usize..=10, 1usize..=32).prop_flat_map(|(len, m)| {
        prop::collection::vec(prop::collection::vec(prop::bool::ANY, len), m).prop_map(|sets| {
            sets.into_iter()
                .map(|bits| bits.into_iter().map(|b| if b { '1' } else { '0' }).collect())
                .collect()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mock_reproduces_explicit_marginals(parents in parent_set(), seed in any::<u64>(), underscore in any::<bool>()) {
        let codec = if underscore { Codec::Underscore } else { Codec::Plain };
        let engine = UmdaMock::from_prompt(codec);
        let mut rng = RngStream::new(seed, "oracle");
        let implied = lmx_marginals(&parents, &engine, &PromptTemplate::default(), codec, &mut rng).unwrap();
        let explicit = umda_marginals(&parents).unwrap();
        prop_assert!(mean_abs_diff(&explicit, &implied.marginals).unwrap() <= 1e-12);
    }

    #[test]
    fn marginals_ignore_parent_order(parents in parent_set(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = parents.clone();
        shuffled.shuffle(&mut RngStream::new(seed, "perm"));
        prop_assert_eq!(umda_marginals(&parents).unwrap(), umda_marginals(&shuffled).unwrap());
    }

    #[test]
    fn difference_is_a_pseudometric(
        a in prop::collection::vec(0.0f64..=1.0, 5),
        b in prop::collection::vec(0.0f64..=1.0, 5),
        c in prop::collection::vec(0.0f64..=1.0, 5),
    ) {
        let (a, b, c) = (dist(&a), dist(&b), dist(&c));
        let ab = mean_abs_diff(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, mean_abs_diff(&b, &a).unwrap());
        prop_assert_eq!(mean_abs_diff(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= mean_abs_diff(&a, &c).unwrap() + mean_abs_diff(&c, &b).unwrap() + 1e-12);
    }
}

fn setup(experiments: usize, children: usize) -> OrderBiasSetup {
    OrderBiasSetup {
        length: 10,
        sort_key: SortKey::Ones,
        experiments,
        children_per_experiment: children,
        parents_per_set: 6,
        codec: Codec::Plain,
    }
}

#[test]
fn mock_shows_no_order_bias() {
    let engine = UmdaMock::from_prompt(Codec::Plain);
    // One child per parent set keeps the draws within an order independent.
    let t = ordering_bias_experiment(&setup(1000, 1), &ParentOrder::ALL, &engine, &SamplingParams::default(), 5);
    for o in ParentOrder::ALL {
        assert_eq!(t.total(o), 1000);
    }
    let asc = &t.counts[&ParentOrder::Ascending];
    let desc = &t.counts[&ParentOrder::Descending];
    // 2 x k contingency test over score bins with enough mass
    let bins: Vec<usize> = (0..=10).filter(|&s| asc[s] + desc[s] >= 10).collect();
    let total = (t.total(ParentOrder::Ascending) + t.total(ParentOrder::Descending)) as f64;
    let mut stat = 0.0;
    for &s in &bins {
        for row in [asc, desc] {
            let row_total: usize = bins.iter().map(|&b| row[b]).sum();
            let col = (asc[s] + desc[s]) as f64;
            let expected = row_total as f64 * col / total;
            stat += (row[s] as f64 - expected).powi(2) / expected;
        }
    }
    let p = 1.0 - ChiSquared::new((bins.len() - 1) as f64).unwrap().cdf(stat);
    assert!(p > 0.01, "p = {p}, {asc:?} vs {desc:?}");
}

/// Echoes the last parent of the prompt: under ascending order that is the
/// best parent, under descending the worst.
fn echo_last() -> FnEngine {
    FnEngine::new("echo-last", |req| {
        let last = req.prompt.lines().last().unwrap_or("").to_string();
        format!("{last}\n{last}\n{last}\n")
    })
}

#[test]
fn order_sensitive_engine_shifts_mass_exactly() {
    let s = setup(3, 4);
    let engine = echo_last();
    let orders = [ParentOrder::Ascending, ParentOrder::Descending];
    let t = ordering_bias_experiment(&s, &orders, &engine, &SamplingParams::default(), 9);

    let root = RngStream::new(9, "order-bias");
    let mut want_asc = vec![0usize; 11];
    let mut want_desc = vec![0usize; 11];
    for e in 0..3 {
        let mut rng = root.child(format!("experiment{e}"));
        let scores: Vec<usize> = (0..6).map(|_| onemax(&random_bits(10, &mut rng))).collect();
        want_asc[*scores.iter().max().unwrap()] += 4;
        want_desc[*scores.iter().min().unwrap()] += 4;
    }
    assert_eq!(t.counts[&ParentOrder::Ascending], want_asc);
    assert_eq!(t.counts[&ParentOrder::Descending], want_desc);
    assert!(t.mean_score(ParentOrder::Ascending) >= t.mean_score(ParentOrder::Descending));

    // the same traffic replayed from a recording gives the same table
    let recorder = RecordingEngine::new(echo_last());
    let recorded = ordering_bias_experiment(&s, &orders, &recorder, &SamplingParams::default(), 9);
    let replay = ReplayEngine::new(recorder.recording());
    let replayed = ordering_bias_experiment(&s, &orders, &replay, &SamplingParams::default(), 9);
    assert_eq!(recorded, replayed);
    assert_eq!(replayed, t);

    let mut csv = Vec::new();
    t.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 2 * 11);
}
