mod common;

use std::time::Duration;

use common::Stubs;
use repro_audit::fetch::{fetch_repository, FetchStatus, FileKind, RepoFetcher};
use repro_audit::http::{HttpClient, HttpOptions, RetryPolicy};
use repro_audit::ingest::{fetch_fulltext, ArticleRecord, FulltextFetcher, OaEndpoint, OaStatus};
use repro_audit::linkres::{resolve_link, DoiError, DoiResolver, Provider, Resolution};
use stub_http::Reply;

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        attempts: 2,
        base_delay: Duration::from_millis(1),
        max_wait: Duration::from_millis(10),
    }
}

fn client_for(stubs: &Stubs) -> HttpClient {
    HttpClient::new(HttpOptions {
        allowed_hosts: Some(vec![stubs.server.authority()]),
        timeout: Duration::from_secs(5),
        ..HttpOptions::default()
    })
}

fn fulltext_fetcher(stubs: &Stubs, cache: &std::path::Path) -> FulltextFetcher {
    let endpoint = OaEndpoint {
        idconv: None,
        fulltext: stubs.fulltext_template(),
    };
    FulltextFetcher::new(client_for(stubs), endpoint, cache).with_retry(fast_retry())
}

#[test]
fn fulltext_retrieval_over_stub() {
    let stubs = Stubs::start();
    let cache = tempfile::tempdir().unwrap();
    for (id, journal) in [("1001", "BMC Medicine"), ("1002", "JAMA"), ("1003", "BMJ")] {
        let body = format!("<sec><title>Methods</title><p>Article {id} fitted a logistic model.</p></sec>");
        stubs.article(id, &common::jats(id, &format!("Study {id}"), journal, 2021, &body));
    }
    stubs.server.get("/oa/1004", Reply::new(404));
    stubs.server.get("/oa/1005", Reply::new(503));
    let f = fulltext_fetcher(&stubs, cache.path());

    for id in ["1001", "1002", "1003"] {
        let rec = fetch_fulltext(&ArticleRecord::pending(id), &f).unwrap();
        assert_eq!(rec.oa_status, OaStatus::Retrieved);
        assert_eq!(rec.publication_year, Some(2021));
        let text = rec.screening_text.unwrap();
        assert!(text.contains(&format!("Article {id} fitted a logistic model.")), "{text}");
    }
    let gone = fetch_fulltext(&ArticleRecord::pending("1004"), &f).unwrap();
    assert_eq!(gone.oa_status, OaStatus::NotRetrievable);
    let err = fetch_fulltext(&ArticleRecord::pending("1005"), &f).unwrap_err();
    assert!(err.is_retryable(), "{err}");

    // warm cache answers without the network
    stubs.server.clear_log();
    for id in ["1001", "1004"] {
        fetch_fulltext(&ArticleRecord::pending(id), &f).unwrap();
    }
    assert!(stubs.server.requests().is_empty());
}

#[test]
fn doi_redirect_chain_resolves_to_repository() {
    let stubs = Stubs::start();
    let s = &stubs.server;
    s.get("/doi/10.5281/zenodo.123", Reply::redirect(302, "/hop/one"));
    s.get("/hop/one", Reply::redirect(301, "/hop/two"));
    s.get("/hop/two", Reply::redirect(302, "https://github.com/lab/riskmodel/tree/v1.0"));
    let resolver = DoiResolver::new(client_for(&stubs), s.url("/doi")).with_retry(fast_retry());

    let link = resolve_link("https://doi.org/10.5281/zenodo.123", Some(&resolver)).unwrap();
    assert_eq!(link.resolution, Resolution::Ok);
    assert!(link.via_doi);
    assert_eq!(link.provider, Some(Provider::Github));
    assert_eq!(link.canonical_root.as_deref(), Some("https://github.com/lab/riskmodel"));
    assert_eq!(s.hits("/hop/two"), 1);

    // memoized
    resolve_link("doi:10.5281/zenodo.123", Some(&resolver)).unwrap();
    assert_eq!(s.hits("/hop/two"), 1);
}

#[test]
fn doi_failures_are_classified() {
    let stubs = Stubs::start();
    let s = &stubs.server;
    s.get("/doi/10.1000/missing", Reply::new(404));
    s.get("/doi/10.1000/loop", Reply::redirect(302, "/loop/a"));
    s.get("/loop/a", Reply::redirect(302, "/loop/b"));
    s.get("/loop/b", Reply::redirect(302, "/loop/a"));
    s.get("/doi/10.1000/flaky", Reply::new(503));
    let resolver = DoiResolver::new(client_for(&stubs), s.url("/doi")).with_retry(fast_retry());

    assert!(matches!(resolver.resolve_doi("10.1000/missing"), Err(DoiError::Unresolvable { .. })));
    assert!(matches!(resolver.resolve_doi("10.1000/loop"), Err(DoiError::Unresolvable { .. })));
    assert!(matches!(resolver.resolve_doi("10.1000/flaky"), Err(DoiError::Transient { .. })));
    let link = resolve_link("10.1000/missing", Some(&resolver)).unwrap();
    assert_eq!(link.resolution, Resolution::DoiUnresolvable);
}

#[test]
fn github_snapshot_over_stub() {
    let stubs = Stubs::start();
    stubs.github_repo(
        "lab",
        "riskmodel",
        &[
            ("README.md", b"# Risk model\n"),
            ("src/fit.py", b"import numpy as np\n"),
            ("data/sample.csv", b"a,b\n1,2\n"),
        ],
    );
    stubs.server.get("/github/repos/lab/gone", Reply::new(404));
    let cache = tempfile::tempdir().unwrap();
    let fetcher = RepoFetcher::new(client_for(&stubs), stubs.providers(), cache.path())
        .with_retry(fast_retry())
        .with_clock(common::fixed_clock());

    let link = resolve_link("https://github.com/lab/riskmodel/blob/main/src/fit.py", None).unwrap();
    let snap = fetch_repository(&link, &fetcher).unwrap();
    assert_eq!(snap.fetch_status, FetchStatus::Ok, "{:?}", snap.detail);
    assert_eq!(snap.ref_label, "main");
    let mut paths: Vec<(&str, FileKind)> = snap.files.iter().map(|f| (f.path.as_str(), f.kind)).collect();
    paths.sort();
    assert_eq!(
        paths,
        vec![
            ("README.md", FileKind::Readme),
            ("data/sample.csv", FileKind::Data),
            ("src/fit.py", FileKind::Source)
        ]
    );
    let dir = snap.content_dir.clone().unwrap();
    assert_eq!(std::fs::read(dir.join("src/fit.py")).unwrap(), b"import numpy as np\n");

    stubs.server.clear_log();
    assert_eq!(fetch_repository(&link, &fetcher).unwrap(), snap);
    assert!(stubs.server.requests().is_empty(), "warm cache must not download");

    let missing = resolve_link("https://github.com/lab/gone", None).unwrap();
    let snap = fetch_repository(&missing, &fetcher).unwrap();
    assert_eq!(snap.fetch_status, FetchStatus::PrivateOrMissing);
    assert!(snap.files.is_empty());
}

#[test]
fn requests_outside_allowed_hosts_are_blocked() {
    let stubs = Stubs::start();
    let client = client_for(&stubs);
    let err = client.get("https://example.org/", &[]).unwrap_err();
    assert!(err.to_string().to_lowercase().contains("blocked") || err.to_string().contains("allowed"), "{err}");
    stubs.server.get("/ping", Reply::ok("pong"));
    assert_eq!(client.get(&stubs.server.url("/ping"), &[]).unwrap().text(), "pong");
}
