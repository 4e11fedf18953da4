use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use segcl::probe::{score, split, F1Mode};

fn labeled(sizes: &[usize]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (c, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            out.push((format!("c{c}d{i}"), format!("class{c}")));
        }
    }
    out
}

/// Macro-F1 counted pair by pair, without a confusion matrix, over the
/// classes seen in either the truth or the predictions.
fn macro_f1(truth: &[usize], pred: &[usize]) -> f64 {
    let seen: BTreeSet<usize> = truth.iter().chain(pred).copied().collect();
    let mut total = 0.0;
    for &k in &seen {
        let tp = truth
            .iter()
            .zip(pred)
            .filter(|&(&t, &p)| t == k && p == k)
            .count() as f64;
        let fp = truth
            .iter()
            .zip(pred)
            .filter(|&(&t, &p)| t != k && p == k)
            .count() as f64;
        let fn_ = truth
            .iter()
            .zip(pred)
            .filter(|&(&t, &p)| t == k && p != k)
            .count() as f64;
        total += if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        };
    }
    total / seen.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn split_partitions_every_class(
        sizes in prop::collection::vec(2usize..40, 1..6),
        frac in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let items = labeled(&sizes);
        let (train, test) = split(&items, frac, seed).unwrap();
        let train_set: BTreeSet<&String> = train.iter().collect();
        let test_set: BTreeSet<&String> = test.iter().collect();
        prop_assert_eq!(train_set.len(), train.len());
        prop_assert_eq!(test_set.len(), test.len());
        prop_assert!(train_set.is_disjoint(&test_set));
        let all: BTreeSet<&String> = items.iter().map(|(id, _)| id).collect();
        let union: BTreeSet<&String> = train_set.union(&test_set).copied().collect();
        prop_assert_eq!(union, all);

        let label: BTreeMap<&str, &str> = items.iter().map(|(i, l)| (i.as_str(), l.as_str())).collect();
        for (c, &n) in sizes.iter().enumerate() {
            let name = format!("class{c}");
            let k = train.iter().filter(|id| label[id.as_str()] == name).count();
            prop_assert!(k >= 1 && k < n, "class {} has {} of {} in train", c, k, n);
            // Within one document of its share unless clamped.
            let share = n as f64 * (items.len() as f64 * frac).round() / items.len() as f64;
            prop_assert!((k as f64 - share).abs() < 1.0 + 1e-9 || k == 1 || k == n - 1);
        }
        let again = split(&items, frac, seed).unwrap();
        prop_assert_eq!(again, (train, test));
    }

    #[test]
    fn macro_f1_matches_pairwise_count(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60),
    ) {
        let classes: Vec<String> = (0..4).map(|c| c.to_string()).collect();
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let (acc, f1, _) = score(&classes, &truth, &pred, F1Mode::Macro).unwrap();
        let expected_acc = pairs.iter().filter(|p| p.0 == p.1).count() as f64 / pairs.len() as f64;
        prop_assert!((acc - expected_acc).abs() < 1e-15);
        prop_assert!((f1 - macro_f1(&truth, &pred)).abs() < 1e-12);
        let (_, micro, _) = score(&classes, &truth, &pred, F1Mode::Micro).unwrap();
        prop_assert!((micro - expected_acc).abs() < 1e-12);
        let (racc, rf1, _) = score(&classes, &truth.iter().rev().copied().collect::<Vec<_>>(), &pred.iter().rev().copied().collect::<Vec<_>>(), F1Mode::Macro).unwrap();
        prop_assert_eq!((racc, rf1), (acc, f1));
    }
}

#[test]
fn singleton_class_is_rejected() {
    assert!(split(&labeled(&[5, 1]), 0.7, 0).is_err());
}
