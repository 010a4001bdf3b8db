mod common;

use std::collections::BTreeMap;

use common::scenario::{tree_bytes, Scenario};
use repro_audit::evalmet::{AnnotationSet, MetricReport, Unit};
use repro_audit::pipeline::{
    article_predictions, evaluate_articles, PipelineError, ProvenanceRecord, Stage, StageSummary, UnitRecord,
    ARTICLES, ASSESSMENTS, LINKS, SCREENING, SNAPSHOTS,
};
use repro_audit::screen::ScreenOutcome;
use repro_audit::store;

fn outcomes(s: &StageSummary) -> BTreeMap<&str, usize> {
    s.outcomes.iter().map(|(k, v)| (k.as_str(), *v)).collect()
}

fn by_stage(summaries: &[StageSummary]) -> BTreeMap<Stage, &StageSummary> {
    summaries.iter().map(|s| (s.stage.unwrap(), s)).collect()
}

#[test]
fn full_run_over_stubs() {
    let sc = Scenario::new();
    let summaries = sc.pipeline().run_all().unwrap();
    let st = by_stage(&summaries);
    assert_eq!(st.len(), 8);
    for s in &summaries {
        assert_eq!(s.hard_failures(), 0, "{s:?}");
    }

    let ingest = outcomes(st[&Stage::Ingest]);
    assert_eq!(ingest["total_raw"], 9);
    assert_eq!(ingest["duplicates_removed"], 1);
    assert_eq!(ingest["unique"], 8);
    assert_eq!(ingest["retrieved"], 7);
    assert_eq!(ingest["not_retrievable"], 1);

    let screen = outcomes(st[&Stage::Screen]);
    assert_eq!((screen["in_scope"], screen["out_of_scope"]), (6, 1));

    let resolve = outcomes(st[&Stage::Resolve]);
    assert_eq!(resolve["ok"], 3);
    assert_eq!(resolve["unsupported_provider"], 1);

    let fetch = outcomes(st[&Stage::Fetch]);
    assert_eq!(fetch["ok"], 2);
    assert_eq!(fetch["ok_with_source"], 2);
    assert_eq!(fetch["unsupported"], 1);
    assert_eq!(fetch["unresolved"], 1);

    let assess = outcomes(st[&Stage::Assess]);
    assert_eq!((assess["with_backend"], assess["static_only"]), (1, 1));

    let report = outcomes(st[&Stage::Report]);
    assert_eq!(report["articles"], 8);
    assert_eq!(report["eligible"], 6);
    // repository, appendix and unsupported-host sharers
    assert_eq!(report["sharing"], 4);
    assert_eq!(report["repositories"], 2);

    let out = sc.out();
    for f in ["reports/plot_manifest.json", "evaluation/articles.json", "evaluation/repositories.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn repository_provenance_is_recorded() {
    let sc = Scenario::new();
    sc.pipeline().run_all().unwrap();
    let out = sc.out();
    let repos: Vec<UnitRecord<repro_audit::pipeline::AssessedRepo>> = store::read_jsonl(&out.join(ASSESSMENTS)).unwrap();
    assert_eq!(repos.len(), 2);
    let mut notes = BTreeMap::new();
    for r in &repos {
        let a = r.value().unwrap();
        let prov: ProvenanceRecord = store::read_json(&out.join(&a.provenance_path)).unwrap();
        assert_eq!(prov.canonical_root, a.canonical_root);
        let fields = &prov.provenance.fields;
        assert!(fields.contains_key("contains_readme"), "{fields:?}");
        assert!(fields.contains_key("comments_and_explanations"));
        notes.insert(a.canonical_root.clone(), prov.backend_note.clone());
    }
    // the script has no answer for the toolkit repository
    assert!(notes["https://github.com/lab/riskmodel"].is_none());
    assert!(notes["https://github.com/lab/toolkit"].is_some());
}

#[test]
fn rerun_does_no_work() {
    let sc = Scenario::new();
    sc.pipeline().run_all().unwrap();
    let before = tree_bytes(&sc.out());
    sc.stubs.server.clear_log();
    let again = sc.pipeline().run_all().unwrap();
    for s in &again {
        assert_eq!(s.processed, 0, "{:?} reprocessed units", s.stage);
    }
    assert!(sc.stubs.server.requests().is_empty());
    assert_eq!(tree_bytes(&sc.out()), before);
}

fn truncate_lines(path: &std::path::Path, keep: usize, torn: bool) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut kept: String = text.lines().take(keep).map(|l| format!("{l}\n")).collect();
    if torn {
        let next = text.lines().nth(keep).unwrap_or("{\"key\":");
        kept.push_str(&next[..next.len() / 2]);
    }
    std::fs::write(path, kept).unwrap();
}

#[test]
fn crash_resume_reproduces_outputs() {
    let sc = Scenario::new();
    sc.pipeline().run_all().unwrap();
    let out = sc.out();
    let before = tree_bytes(&out);

    truncate_lines(&out.join(ARTICLES), 3, true);
    truncate_lines(&out.join(SCREENING), 2, true);
    truncate_lines(&out.join(LINKS), 1, false);
    truncate_lines(&out.join(SNAPSHOTS), 0, true);
    std::fs::remove_file(out.join(ASSESSMENTS)).unwrap();
    std::fs::remove_dir_all(out.join("reports")).unwrap();
    std::fs::remove_dir_all(out.join("evaluation")).unwrap();

    sc.pipeline().run_all().unwrap();
    let after = tree_bytes(&out);
    assert_eq!(before.keys().collect::<Vec<_>>(), after.keys().collect::<Vec<_>>());
    for (k, v) in &before {
        assert!(after[k] == *v, "{k} differs after resume");
    }
}

#[test]
fn stages_require_predecessors() {
    let sc = Scenario::new();
    let p = sc.pipeline();
    for (stage, required) in [
        (Stage::Screen, Stage::Ingest),
        (Stage::Resolve, Stage::Screen),
        (Stage::Fetch, Stage::Resolve),
        (Stage::Compile, Stage::Fetch),
        (Stage::Assess, Stage::Compile),
        (Stage::Report, Stage::Ingest),
    ] {
        match p.run_stage(stage) {
            Err(PipelineError::MissingPredecessor { required: r, .. }) => assert_eq!(r, required, "{stage}"),
            other => panic!("{stage}: {other:?}"),
        }
    }
}

#[test]
fn evaluate_stage_matches_direct_metrics() {
    let sc = Scenario::new();
    sc.pipeline().run_all().unwrap();
    let out = sc.out();
    let written: MetricReport = store::read_json(&out.join("evaluation/articles.json")).unwrap();
    let screening: Vec<UnitRecord<ScreenOutcome>> = store::read_jsonl(&out.join(SCREENING)).unwrap();
    let gold = AnnotationSet::from_jsonl(sc.config.annotations.articles.as_ref().unwrap(), Unit::Article).unwrap();
    let (direct, links) = evaluate_articles(&article_predictions(&screening), &gold).unwrap();
    assert_eq!(written, direct);

    // 1007 is predicted in scope against a gold "out of scope": 6 of 7 right
    let rows: BTreeMap<_, _> = direct.per_label.iter().map(|r| (r.label.as_str(), r)).collect();
    assert_eq!(rows["In scope"].support, 5);
    assert_eq!(rows["Out of scope"].support, 2);
    let links = links.unwrap();
    assert_eq!((links.correct, links.evaluated), (3, 4));
}

#[test]
fn forced_report_is_identical() {
    let sc = Scenario::new();
    sc.pipeline().run_all().unwrap();
    let before = tree_bytes(&sc.out().join("reports"));
    let s = sc.pipeline().with_force(true).run_stage(Stage::Report).unwrap();
    assert_eq!(s.processed, 1);
    assert_eq!(tree_bytes(&sc.out().join("reports")), before);
}

#[test]
fn single_repository_audit() {
    let sc = Scenario::new();
    let p = sc.pipeline();
    let r = p.audit("https://github.com/lab/riskmodel/tree/main/src").unwrap();
    assert_eq!(r.outcome, repro_audit::pipeline::AuditOutcome::Complete, "{:?}", r.detail);
    let a = r.assessment.unwrap();
    assert!(a.contains_readme && a.contains_license && a.implements_tests);
    assert!(r.provenance.unwrap().backend_note.is_none());
    assert!(sc.out().join("audit/lab__riskmodel.audit.json").exists());

    let r = p.audit("https://bitbucket.org/lab/model").unwrap();
    assert_eq!(r.outcome, repro_audit::pipeline::AuditOutcome::UnsupportedProvider);
    let r = p.audit("https://github.com/lab/private").unwrap();
    assert_eq!(r.outcome, repro_audit::pipeline::AuditOutcome::FetchFailed);
}
