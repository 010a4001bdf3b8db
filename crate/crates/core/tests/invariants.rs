use proptest::prelude::*;
use repro_audit::compile::{count_tokens, truncate_to_tokens};
use repro_audit::evalmet::{precision_recall_f1, weighted_average, Counts};
use repro_audit::report::pct;
use repro_audit::screen::{ArticleDisposition, DispositionCounts, SharingStatus};

fn counts() -> impl Strategy<Value = Counts> {
    (0usize..200, 0usize..200, 0usize..200, 0usize..200).prop_map(|(tp, fp, fn_, tn)| Counts { tp, fp, fn_, tn })
}

fn disposition() -> impl Strategy<Value = ArticleDisposition> {
    prop_oneof![
        Just(ArticleDisposition::NotRetrievable),
        Just(ArticleDisposition::AssessmentFailed),
        Just(ArticleDisposition::OutOfScope),
        prop::sample::select(SharingStatus::ALL.to_vec()).prop_map(ArticleDisposition::Sharing),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn metrics_are_bounded(c in counts()) {
        let m = precision_recall_f1(&c);
        for v in [m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if !m.degenerate {
            prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
            prop_assert!(m.f1 + 1e-12 >= m.precision.min(m.recall));
        }
        prop_assert_eq!(m.degenerate, c.tp == 0);
    }

    #[test]
    fn weighted_average_is_order_free_and_bounded(rows in prop::collection::vec((counts(), 1usize..500), 1..8)) {
        let rows: Vec<_> = rows.iter().map(|(c, n)| (precision_recall_f1(c), *n)).collect();
        let a = weighted_average(&rows).unwrap();
        let mut rev = rows.clone();
        rev.reverse();
        let b = weighted_average(&rev).unwrap();
        prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        let lo = rows.iter().map(|(m, _)| m.f1).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|(m, _)| m.f1).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(a.f1 >= lo - 1e-12 && a.f1 <= hi + 1e-12);
    }

    #[test]
    fn every_article_lands_in_one_bucket(items in prop::collection::vec(disposition(), 0..300)) {
        let c = DispositionCounts::tally(&items);
        prop_assert!(c.is_conserved());
        prop_assert_eq!(c.total, items.len());
        let sharing = items.iter().filter(|d| matches!(d, ArticleDisposition::Sharing(s) if s.is_sharing())).count();
        prop_assert_eq!(c.sharing, sharing);
        let mut rev = items.clone();
        rev.reverse();
        prop_assert_eq!(DispositionCounts::tally(&rev), c);
    }

    #[test]
    fn pct_is_bounded_and_monotone(den in 1usize..5000, a in 0usize..5000, b in 0usize..5000) {
        let (x, y) = (a.min(b).min(den), a.max(b).min(den));
        prop_assert!((0.0..=100.0).contains(&pct(x, den)));
        prop_assert!(pct(x, den) <= pct(y, den));
    }

    #[test]
    fn truncation_keeps_a_token_prefix(text in "[a-z \\n\\t]{0,400}", max in 0usize..40) {
        let (kept, cut) = truncate_to_tokens(&text, max);
        prop_assert!(text.starts_with(kept));
        prop_assert!(count_tokens(kept) <= max);
        prop_assert_eq!(cut, count_tokens(&text) > max);
        if cut {
            prop_assert_eq!(count_tokens(kept), max);
        } else {
            prop_assert_eq!(kept, text.as_str());
        }
    }
}
