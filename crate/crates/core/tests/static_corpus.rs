mod common;

use repro_audit::assess::{detect_static_features, Detectors};

#[test]
fn static_labels_match_hand_labels() {
    let det = Detectors::default();
    let corpus = common::static_corpus();
    assert_eq!(corpus.len(), 15);
    let mut mismatches = Vec::new();
    for repo in &corpus {
        let (snap, src) = common::mem_repo(&format!("https://github.com/corpus/{}", repo.name), &common::text_files(&repo.files));
        let a = detect_static_features(&snap, &src, &det).assessment;
        for (field, want) in &repo.labels {
            let got = a.field_value(field);
            if &got != want {
                mismatches.push(format!("{}.{field}: expected {want}, got {got}", repo.name));
            }
        }
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}

#[test]
fn detection_is_deterministic() {
    let det = Detectors::default();
    for repo in common::static_corpus() {
        let (snap, src) = common::mem_repo("https://github.com/corpus/x", &common::text_files(&repo.files));
        let a = detect_static_features(&snap, &src, &det);
        let b = detect_static_features(&snap, &src, &det);
        assert_eq!(a, b, "{}", repo.name);
    }
}
