#![allow(dead_code)]

pub mod scenario;
pub mod urlgen;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use repro_audit::compile::MemSource;
use repro_audit::fetch::{classify_files, Clock, FetchStatus, KindRules, ProviderEndpoints, RepoSnapshot};
use repro_audit::linkres::{classify_provider, normalize_to_root, Classification, NormalizeError, Provider};
use serde::Deserialize;
use serde_json::{json, Map, Value};
use stub_http::{Reply, StubServer};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(Debug, Deserialize)]
pub struct CorpusRepo {
    pub name: String,
    pub files: BTreeMap<String, String>,
    pub labels: Map<String, Value>,
}

pub fn static_corpus() -> Vec<CorpusRepo> {
    let text = std::fs::read_to_string(fixture("static_corpus.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn mem_repo(root: &str, files: &BTreeMap<String, Vec<u8>>) -> (RepoSnapshot, MemSource) {
    let listing: Vec<(String, u64)> = files.iter().map(|(p, b)| (p.clone(), b.len() as u64)).collect();
    let snap = RepoSnapshot {
        canonical_root: root.to_string(),
        provider: Provider::Github,
        retrieved_at: fixed_time(),
        ref_label: "main".into(),
        files: classify_files(&listing, &KindRules::default()),
        fetch_status: FetchStatus::Ok,
        content_dir: None,
        warnings: Vec::new(),
        detail: None,
    };
    (snap, MemSource(files.clone()))
}

pub fn text_files(files: &BTreeMap<String, String>) -> BTreeMap<String, Vec<u8>> {
    files.iter().map(|(k, v)| (k.clone(), v.as_bytes().to_vec())).collect()
}

pub fn golden_urls() -> Vec<(String, String)> {
    let text = std::fs::read_to_string(fixture("golden_urls.tsv")).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (a, b) = l.split_once('\t').expect("tab separated");
            (a.to_string(), b.to_string())
        })
        .collect()
}

/// Offline label of a raw link in the golden table vocabulary.
pub fn link_label(raw: &str) -> String {
    match classify_provider(raw) {
        Classification::Doi(d) => format!("DOI:{d}"),
        Classification::Malformed => "MALFORMED".into(),
        Classification::Provider(Provider::Unsupported) => "UNSUPPORTED".into(),
        Classification::Provider(p) => match normalize_to_root(raw, p) {
            Ok(root) => root,
            Err(NormalizeError::ProfileOnly) => "PROFILE_ONLY".into(),
            Err(NormalizeError::Malformed(_)) => "MALFORMED".into(),
            Err(NormalizeError::Unsupported) => "UNSUPPORTED".into(),
        },
    }
}

pub fn fixed_time() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 3, 1, 12, 0, 0).unwrap()
}

pub fn fixed_clock() -> Clock {
    Arc::new(fixed_time)
}

/// gzip tar with every entry under `top/`, as forge archives are laid out.
pub fn tarball(top: &str, files: &[(&str, &[u8])]) -> Vec<u8> {
    let gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
    let mut b = tar::Builder::new(gz);
    for (path, body) in files {
        let mut h = tar::Header::new_gnu();
        h.set_size(body.len() as u64);
        h.set_mode(0o644);
        h.set_mtime(0);
        h.set_cksum();
        b.append_data(&mut h, format!("{top}/{path}"), *body).unwrap();
    }
    let mut gz = b.into_inner().unwrap();
    gz.flush().unwrap();
    gz.finish().unwrap()
}

/// Stub standing in for every remote service a run touches.
pub struct Stubs {
    pub server: StubServer,
}

impl Stubs {
    pub fn start() -> Self {
        Self {
            server: StubServer::start(),
        }
    }

    pub fn providers(&self) -> ProviderEndpoints {
        let s = &self.server;
        ProviderEndpoints {
            github_api: s.url("/github"),
            gitlab_api: s.url("/gitlab"),
            gitee_api: s.url("/gitee"),
            gitee_archive: s.url("/gitee-archive/{owner}/{name}/{branch}.zip"),
            zenodo_api: s.url("/zenodo"),
            figshare_api: s.url("/figshare"),
            osf_api: s.url("/osf"),
            osf_files: s.url("/osf-files"),
        }
    }

    pub fn github_repo(&self, owner: &str, name: &str, files: &[(&str, &[u8])]) {
        self.server.get(
            &format!("/github/repos/{owner}/{name}"),
            Reply::json(json!({"full_name": format!("{owner}/{name}"), "default_branch": "main"}).to_string()),
        );
        self.server.get(
            &format!("/github/repos/{owner}/{name}/tarball/main"),
            Reply::ok(tarball(&format!("{owner}-{name}-abc123"), files)).header("Content-Type", "application/gzip"),
        );
    }

    /// Full-text document for `pmid`, served at `/oa/<pmid>`.
    pub fn article(&self, pmid: &str, xml: &str) {
        self.server.get(&format!("/oa/{pmid}"), Reply::ok(xml.as_bytes().to_vec()));
    }

    pub fn fulltext_template(&self) -> String {
        self.server.url("/oa/{pmid}")
    }
}

/// Minimal full-text document.
pub fn jats(pmid: &str, title: &str, journal: &str, year: i32, body: &str) -> String {
    format!(
        r#"<?xml version="1.0"?>
<article xmlns:xlink="http://www.w3.org/1999/xlink">
  <front>
    <journal-meta><journal-title-group><journal-title>{journal}</journal-title></journal-title-group></journal-meta>
    <article-meta>
      <article-id pub-id-type="pmid">{pmid}</article-id>
      <title-group><article-title>{title}</article-title></title-group>
      <pub-date pub-type="epub"><year>{year}</year></pub-date>
      <abstract><p>{title}.</p></abstract>
    </article-meta>
  </front>
  <body>{body}</body>
</article>"#
    )
}

pub fn paper_answer(is_match: bool, country: &str, repo_url: Option<&str>, sentence: Option<&str>) -> Value {
    json!({
        "is_match": is_match,
        "reason": if is_match { "develops a clinical prediction model" } else { "not a prediction model study" },
        "country_first_author_institution": country,
        "repo_url": repo_url,
        "code_statement_locations": repo_url.map(|_| vec!["code_availability_section"]),
        "code_statement_sentence": sentence,
    })
}
