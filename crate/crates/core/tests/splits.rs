mod common;

use std::collections::HashSet;

use common::*;
use fuzztune::corpus::{split, subsample, Fractions, SplitSpec, SplitUnit, Splits};
use num_rational::Ratio;
use proptest::prelude::*;

#[test]
fn clone_split_and_program_subsample_counts() {
    let bad = split_arithmetic_failures();
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn split_and_subsample_are_deterministic() {
    let corpus = synthetic_corpus(30, 6);
    let spec = SplitSpec::clone_detection(Fractions::from_weights(64, 16, 24).unwrap(), 3);
    let a = split(&corpus, &spec).unwrap();
    assert_eq!(a, split(&corpus, &spec).unwrap());
    let other = split(&corpus, &SplitSpec { seed: 4, ..spec }).unwrap();
    assert_ne!(a, other);
    let r = Ratio::new(1, 3);
    assert_eq!(
        subsample(&corpus, &a, r, SplitUnit::Programs, 9).unwrap(),
        subsample(&corpus, &a, r, SplitUnit::Programs, 9).unwrap()
    );
}

#[test]
fn problem_subsample_keeps_whole_problems() {
    let corpus = synthetic_corpus(104, 5);
    let spec = SplitSpec::clone_detection(Fractions::from_weights(64, 16, 24).unwrap(), 1);
    let s = split(&corpus, &spec).unwrap();
    let sub = subsample(&corpus, &s, Ratio::new(1, 4), SplitUnit::Problems, 2).unwrap();
    assert_eq!(sub.train.len(), 16 * 5);
    assert_eq!(sub.val.len(), 4 * 5);
    assert_eq!(sub.test, s.test);
}

#[test]
fn full_ratio_is_identity() {
    let corpus = synthetic_corpus(10, 5);
    let s = split(&corpus, &SplitSpec::classification_default(0)).unwrap();
    assert_eq!(subsample(&corpus, &s, Ratio::new(1, 1), SplitUnit::Programs, 0).unwrap(), s);
    assert!(subsample(&corpus, &s, Ratio::new(0, 1), SplitUnit::Programs, 0).is_err());
}

fn all_ids(s: &Splits) -> Vec<&String> {
    s.train.iter().chain(&s.val).chain(&s.test).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clone_split_partitions_problems(problems in 3usize..40, per in 1usize..6, w in (1u64..10, 1u64..10, 1u64..10), seed in any::<u64>()) {
        let corpus = synthetic_corpus(problems, per);
        let f = Fractions::from_weights(w.0, w.1, w.2).unwrap();
        let Ok(s) = split(&corpus, &SplitSpec::clone_detection(f, seed)) else {
            // only allowed when some partition would be empty
            let train = problems as u64 * w.0 / (w.0 + w.1 + w.2);
            let val = problems as u64 * w.1 / (w.0 + w.1 + w.2);
            prop_assert!(train == 0 || val == 0 || train + val == problems as u64);
            return Ok(());
        };
        let ids = all_ids(&s);
        prop_assert_eq!(ids.len(), corpus.len());
        prop_assert_eq!(ids.iter().collect::<HashSet<_>>().len(), corpus.len());
        let prob = |id: &String| id.split('/').next().unwrap().to_string();
        let sets: Vec<HashSet<String>> = [&s.train, &s.val, &s.test].iter().map(|p| p.iter().map(prob).collect()).collect();
        prop_assert!(sets[0].is_disjoint(&sets[1]) && sets[0].is_disjoint(&sets[2]) && sets[1].is_disjoint(&sets[2]));
        prop_assert_eq!(sets[0].len() as u64, problems as u64 * w.0 / (w.0 + w.1 + w.2));
        prop_assert_eq!(sets[1].len() as u64, problems as u64 * w.1 / (w.0 + w.1 + w.2));
    }

    #[test]
    fn program_subsamples_nest(num in 1u64..10, den_extra in 1u64..10, seed in any::<u64>()) {
        let corpus = synthetic_corpus(20, 10);
        let s = split(&corpus, &SplitSpec::clone_detection(Fractions::from_weights(2, 1, 1).unwrap(), 0)).unwrap();
        let big = Ratio::new(num + den_extra, num + 2 * den_extra).min(Ratio::new(1, 1));
        let small = Ratio::new(num, num + 2 * den_extra);
        let (Ok(a), Ok(b)) = (
            subsample(&corpus, &s, small, SplitUnit::Programs, seed),
            subsample(&corpus, &s, big, SplitUnit::Programs, seed),
        ) else {
            return Ok(());
        };
        let total = (Ratio::from_integer((s.train.len() + s.val.len()) as u64) * small).to_integer() as usize;
        prop_assert_eq!(a.train.len() + a.val.len(), total);
        prop_assert_eq!(a.train.len(), total * 4 / 5);
        let bt: HashSet<_> = b.train.iter().collect();
        let bv: HashSet<_> = b.val.iter().collect();
        prop_assert!(a.train.iter().all(|x| bt.contains(x)));
        prop_assert!(a.val.iter().all(|x| bv.contains(x)));
    }
}
