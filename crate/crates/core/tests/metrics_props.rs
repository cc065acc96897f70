mod common;

use std::collections::{BTreeMap, BTreeSet};

use clinannot::labels;
use clinannot::labels::LabelSet;
use clinannot::metrics::*;
use common::*;
use proptest::prelude::*;

fn corpus_pair() -> impl Strategy<Value = (usize, Sets, Sets)> {
    (1usize..=6).prop_flat_map(|n_labels| {
        let max = 1u8 << n_labels;
        prop::collection::vec((0..max, 0..max), 1..=20).prop_map(move |rows| {
            let set = |mask: u8| -> BTreeSet<String> {
                (0..n_labels).filter(|b| mask & (1 << b) != 0).map(|b| format!("L{b}")).collect()
            };
            let mut a = Sets::new();
            let mut b = Sets::new();
            for (i, (x, y)) in rows.into_iter().enumerate() {
                a.insert(format!("t{i:02}"), set(x));
                b.insert(format!("t{i:02}"), set(y));
            }
            (n_labels, a, b)
        })
    })
}

fn space(n: usize) -> LabelSpace {
    LabelSpace::new((0..n).map(|i| format!("L{i}")).collect())
}

proptest! {
    #[test]
    fn matches_oracle((n, a, b) in corpus_pair()) {
        let (ca, cb) = (to_corpus(&a), to_corpus(&b));
        let s = space(n);
        let cols = oracle_columns(&s.columns, &a, &b);
        let m = micro_prf(&ca, &cb, &s).unwrap();
        let (p, r, f) = oracle_prf(&a, &b);
        prop_assert!((m.prf.precision - p).abs() < 1e-12);
        prop_assert!((m.prf.recall - r).abs() < 1e-12);
        prop_assert!((m.prf.f1 - f).abs() < 1e-12);
        prop_assert!((example_f1(&ca, &cb).unwrap() - oracle_example_f1(&a, &b)).abs() < 1e-12);
        let mk = micro_kappa(&ca, &cb, &s).unwrap().value.unwrap();
        prop_assert!((mk - oracle_micro_kappa(&a, &b, &cols)).abs() < 1e-12);
        let mac = macro_kappa(&ca, &cb, &s).unwrap().mean;
        match (mac, oracle_macro_kappa(&a, &b, &cols)) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn swapping_roles_swaps_precision_and_recall((n, a, b) in corpus_pair()) {
        let (ca, cb) = (to_corpus(&a), to_corpus(&b));
        let s = space(n);
        let ab = micro_prf(&ca, &cb, &s).unwrap().prf;
        let ba = micro_prf(&cb, &ca, &s).unwrap().prf;
        prop_assert_eq!(ab.precision, ba.recall);
        prop_assert_eq!(ab.recall, ba.precision);
        prop_assert!((ab.f1 - ba.f1).abs() < 1e-15);
        for v in [ab.precision, ab.recall, ab.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn kappa_is_symmetric_and_bounded((n, a, b) in corpus_pair()) {
        let (ca, cb) = (to_corpus(&a), to_corpus(&b));
        let s = space(n);
        let ab = micro_kappa(&ca, &cb, &s).unwrap().value.unwrap();
        let ba = micro_kappa(&cb, &ca, &s).unwrap().value.unwrap();
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&ab));
        prop_assert_eq!(
            macro_kappa(&ca, &cb, &s).unwrap().mean,
            macro_kappa(&cb, &ca, &s).unwrap().mean
        );
    }

    #[test]
    fn self_agreement_is_perfect((n, a, _b) in corpus_pair()) {
        let ca = to_corpus(&a);
        let s = space(n);
        prop_assert_eq!(example_f1(&ca, &ca).unwrap(), 1.0);
        prop_assert_eq!(exact_set_agreement(&ca, &ca).unwrap().rate, 1.0);
        prop_assert_eq!(micro_kappa(&ca, &ca, &s).unwrap().value, Some(1.0));
        if let Some(m) = macro_kappa(&ca, &ca, &s).unwrap().mean {
            prop_assert!((m - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unused_columns_do_not_move_macro_kappa((n, a, b) in corpus_pair()) {
        let (ca, cb) = (to_corpus(&a), to_corpus(&b));
        let mut wide = space(n);
        wide.columns.push("Never".into());
        prop_assert_eq!(
            macro_kappa(&ca, &cb, &space(n)).unwrap().mean,
            macro_kappa(&ca, &cb, &wide).unwrap().mean
        );
        prop_assert_eq!(
            micro_prf(&ca, &cb, &space(n)).unwrap().prf,
            micro_prf(&ca, &cb, &wide).unwrap().prf
        );
    }

    #[test]
    fn presence_micro_equals_macro((_n, a, b) in corpus_pair()) {
        let pa = presence_corpus(&to_corpus(&a));
        let pb = presence_corpus(&to_corpus(&b));
        let s = LabelSpace::presence();
        let micro = micro_kappa(&pa, &pb, &s).unwrap();
        let mac = macro_kappa(&pa, &pb, &s).unwrap();
        if micro.constant_raters {
            prop_assert_eq!(mac.excluded, 1);
        } else {
            prop_assert!((micro.value.unwrap() - mac.mean.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn strata_partition_the_corpus((n, a, b) in corpus_pair(), flags in prop::collection::vec(any::<bool>(), 20)) {
        let (ca, cb) = (to_corpus(&a), to_corpus(&b));
        let partition: BTreeMap<String, bool> =
            ca.keys().zip(&flags).map(|(k, f)| (k.clone(), *f)).collect();
        let systems = vec![("sys".to_owned(), cb)];
        let r = stratified_report(&ca, &systems, &partition, &space(n)).unwrap();
        let agree = r.agreement.as_ref().map_or(0, |f| f.n);
        let disagree = r.disagreement.as_ref().map_or(0, |f| f.n);
        prop_assert_eq!(r.full.as_ref().unwrap().n, agree + disagree);
        prop_assert_eq!(agree, flags.iter().take(ca.len()).filter(|f| **f).count());
    }
}

#[test]
fn mismatched_ids_are_rejected() {
    let a: LabelCorpus = [("t1".to_owned(), labels!["A"])].into_iter().collect();
    let b: LabelCorpus = [("t2".to_owned(), labels!["A"])].into_iter().collect();
    let s = LabelSpace::new(vec!["A".into()]);
    assert!(matches!(micro_prf(&a, &b, &s), Err(MetricsError::MismatchedTranscripts(_))));
    assert!(matches!(micro_kappa(&a, &b, &s), Err(MetricsError::MismatchedTranscripts(_))));
    assert!(example_f1(&LabelCorpus::new(), &LabelCorpus::new()).is_err());
}

#[test]
fn hand_computed_counts() {
    let gold: LabelCorpus = [
        ("t1".to_owned(), labels!["Persecutory"]),
        ("t2".to_owned(), labels!["Persecutory", "Reference"]),
        ("t3".to_owned(), LabelSet::new()),
    ]
    .into_iter()
    .collect();
    let pred: LabelCorpus = [
        ("t1".to_owned(), labels!["Persecutory"]),
        ("t2".to_owned(), labels!["Reference", "Somatic"]),
        ("t3".to_owned(), LabelSet::new()),
    ]
    .into_iter()
    .collect();
    let s = LabelSpace::new(vec!["Persecutory".into(), "Reference".into(), "Somatic".into()]);
    let m = micro_prf(&gold, &pred, &s).unwrap();
    assert_eq!((m.counts.tp, m.counts.fp, m.counts.fn_, m.counts.tn), (2, 1, 1, 5));
    assert!((m.prf.f1 - 2.0 / 3.0).abs() < 1e-12);
    // (1 + 0.5 + 1) / 3
    assert!((example_f1(&gold, &pred).unwrap() - 2.5 / 3.0).abs() < 1e-12);
    let d = label_distribution(&pred, &s);
    assert_eq!(d.none, 1);
}
