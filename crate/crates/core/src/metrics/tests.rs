use proptest::prelude::*;

use super::*;
use crate::oracle::{chrf_bruteforce, edit_distance, pairwise_auc};

fn ls(score: f64, label: bool) -> LabeledScore {
    LabeledScore { score, label }
}

#[test]
fn cer_examples() {
    assert_eq!(cer("ABC", "ABC").unwrap(), 0.0);
    assert_eq!(cer("PLEASANT", "PLESANT").unwrap(), 0.125);
    assert_eq!(cer("A", "").unwrap(), 1.0);
    assert_eq!(cer("", "A"), Err(MetricError::EmptyTruth));
    assert_eq!(corpus_cer([("AB", "AB"), ("CD", "")]).unwrap(), 0.5);
}

#[test]
fn chrf_examples() {
    assert_eq!(chrf("I AM HAPPY", "I AM HAPPY"), 1.0);
    assert_eq!(chrf("ABC", "XYZ"), 0.0);
    assert_eq!(chrf("", ""), 1.0);
    assert_eq!(chrf("ABC", ""), 0.0);
    // Whitespace is not part of any n-gram.
    assert_eq!(chrf("A B C", "ABC"), 1.0);
    let v = chrf("the cat sat", "the cat sits");
    assert!((v - chrf_bruteforce("the cat sat", "the cat sits", 6, 2.0)).abs() < 1e-12);
    assert!(v > 0.5 && v < 1.0);
}

#[test]
fn auc_examples() {
    let perfect = [ls(0.9, true), ls(0.8, true), ls(0.1, false), ls(0.2, false)];
    let (auc, curve) = roc_auc(&perfect).unwrap();
    assert_eq!(auc, 1.0);
    assert_eq!(curve.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
    assert_eq!(curve.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
    let tied = [ls(0.5, true), ls(0.5, false), ls(0.5, true)];
    assert_eq!(roc_auc(&tied).unwrap().0, 0.5);
    assert!(matches!(roc_auc(&[ls(0.5, true)]), Err(MetricError::SingleClass { .. })));
    assert!(roc_auc(&[ls(f64::NAN, true), ls(0.1, false)]).is_err());
}

#[test]
fn operating_point() {
    let s = [ls(0.9, true), ls(0.4, true), ls(0.35, false), ls(0.1, true), ls(0.2, false)];
    let pr = op_point(&s, 0.3);
    assert!((pr.precision - 2.0 / 3.0).abs() < 1e-12);
    assert!((pr.recall - 2.0 / 3.0).abs() < 1e-12);
    assert!((pr.f1 - 2.0 / 3.0).abs() < 1e-12);
    // Single-class input is still valid here.
    assert_eq!(op_point(&[ls(0.9, true)], 0.3).recall, 1.0);
    assert_eq!(op_point(&[], 0.3).f1, 0.0);
}

#[test]
fn temporal_examples() {
    let one = temporal_f1(&[TimedSpan::new("a", 30, 60)], &[TimedSpan::new("a", 45, 75)]).unwrap();
    assert_eq!(one.f1, 1.0);
    let none = temporal_f1(&[TimedSpan::new("a", 0, 5)], &[TimedSpan::new("a", 6, 9)]).unwrap();
    assert_eq!(none.f1, 0.0);
    // One truth span cannot absorb two predictions.
    let greedy = temporal_f1(
        &[TimedSpan::new("a", 0, 4), TimedSpan::new("b", 3, 8)],
        &[TimedSpan::new("x", 2, 5)],
    )
    .unwrap();
    assert_eq!((greedy.precision, greedy.recall), (0.5, 1.0));
    assert!(temporal_f1(&[TimedSpan::new("bad", 5, 4)], &[]).is_err());
}

#[test]
fn strata() {
    assert!(Stratum::AtLeast3.contains("CAT") && !Stratum::MoreThan3.contains("CAT"));
    assert!(Stratum::MoreThan3.contains("FRICK") && !Stratum::AtLeast3.contains("TO"));
    let mut r = MetricsReport::default();
    r.push("auc", Stratum::All, Some(0.8), 10);
    r.push("auc", Stratum::MoreThan3, None, 0);
    assert!(r.pretty().contains("0.8000"));
    assert_eq!(r.get("auc", Stratum::MoreThan3).unwrap().value, None);
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!['A', 'B', 'C', ' ', 'D']), 0..12)
        .prop_map(|v| v.into_iter().collect())
}

proptest! {
    #[test]
    fn cer_matches_oracle_and_bounds(t in text(), h in text()) {
        prop_assume!(!t.is_empty());
        let tc: Vec<char> = t.chars().collect();
        let hc: Vec<char> = h.chars().collect();
        prop_assert_eq!(levenshtein(&tc, &hc), edit_distance(&tc, &hc));
        let v = cer(&t, &h).unwrap();
        prop_assert!(v <= 1f64.max(hc.len() as f64 / tc.len() as f64) + 1e-12);
        prop_assert_eq!(cer(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn chrf_matches_oracle(a in text(), b in text()) {
        prop_assert!((chrf(&a, &b) - chrf_bruteforce(&a, &b, 6, 2.0)).abs() < 1e-12);
        prop_assert_eq!(chrf(&a, &a), 1.0);
        let v = chrf(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn auc_matches_pairwise(scores in prop::collection::vec((0u8..8, any::<bool>()), 2..50)) {
        let samples: Vec<LabeledScore> = scores.iter().map(|&(s, l)| ls(s as f64 / 8.0, l)).collect();
        let pos: Vec<f64> = samples.iter().filter(|s| s.label).map(|s| s.score).collect();
        let neg: Vec<f64> = samples.iter().filter(|s| !s.label).map(|s| s.score).collect();
        prop_assume!(!pos.is_empty() && !neg.is_empty());
        let (auc, _) = roc_auc(&samples).unwrap();
        prop_assert!((auc - pairwise_auc(&pos, &neg)).abs() < 1e-9);
    }

    #[test]
    fn temporal_f1_ignores_input_order(
        spans in prop::collection::vec((0usize..30, 0usize..6), 0..8),
        truth in prop::collection::vec((0usize..30, 0usize..6), 0..8),
        rot in 0usize..8,
    ) {
        let mk = |v: &[(usize, usize)]| v.iter().enumerate().map(|(i, &(s, l))| TimedSpan::new(i.to_string(), s, s + l)).collect::<Vec<_>>();
        let p = mk(&spans);
        let t = mk(&truth);
        let mut p2 = p.clone();
        let mut t2 = t.clone();
        if !p2.is_empty() { let k = rot % p2.len(); p2.rotate_left(k); }
        t2.reverse();
        prop_assert_eq!(temporal_f1(&p, &t).unwrap(), temporal_f1(&p2, &t2).unwrap());
    }
}
