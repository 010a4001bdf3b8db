//! Article cohort assembly: citation-list aggregation, open-access full-text
//! retrieval and JATS preprocessing.

mod jats;
mod oa;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{self, StoreError};

pub use jats::{parse_article_meta, preprocess_fulltext, ArticleMeta, PreprocessError};
pub use oa::{fetch_fulltext, FulltextError, FulltextFetcher, OaEndpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OaStatus {
    Retrieved,
    NotRetrievable,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub article_id: String,
    pub source_entries: BTreeSet<String>,
    pub title: Option<String>,
    pub journal: Option<String>,
    pub publication_year: Option<i32>,
    pub pmcid: Option<String>,
    pub oa_status: OaStatus,
    pub screening_text: Option<String>,
}

impl ArticleRecord {
    pub fn pending(article_id: impl Into<String>) -> Self {
        Self {
            article_id: article_id.into(),
            source_entries: BTreeSet::new(),
            title: None,
            journal: None,
            publication_year: None,
            pmcid: None,
            oa_status: OaStatus::Pending,
            screening_text: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortCounts {
    pub total_raw: usize,
    pub duplicates_removed: usize,
    pub unique: usize,
    pub not_retrievable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub records: Vec<ArticleRecord>,
    pub created_at: DateTime<Utc>,
    pub counts: CohortCounts,
}

impl CohortManifest {
    pub fn recount(&mut self) {
        self.counts.unique = self.records.len();
        self.counts.not_retrievable = self
            .records
            .iter()
            .filter(|r| r.oa_status == OaStatus::NotRetrievable)
            .count();
    }
}

/// Identifiers cited by one guideline entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CitationList {
    pub entry_id: String,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestWarning {
    pub entry_id: String,
    pub position: usize,
    pub value: String,
    pub message: String,
}

pub fn is_valid_pmid(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 10
        && id.bytes().all(|b| b.is_ascii_digit())
        && !id.starts_with('0')
}

/// Set union of the citation lists, keyed by PubMed id.
///
/// Blank lines are ignored; malformed identifiers are skipped, reported as
/// warnings and not counted in `total_raw`.
pub fn aggregate_citations(
    lists: &[CitationList],
    created_at: DateTime<Utc>,
) -> (CohortManifest, Vec<IngestWarning>) {
    let mut warnings = Vec::new();
    let mut by_id: BTreeMap<u64, BTreeSet<String>> = BTreeMap::new();
    let mut total_raw = 0;
    for list in lists {
        for (position, raw) in list.ids.iter().enumerate() {
            let id = raw.trim();
            if id.is_empty() {
                continue;
            }
            if !is_valid_pmid(id) {
                tracing::warn!(entry = %list.entry_id, value = %id, "skipping malformed identifier");
                warnings.push(IngestWarning {
                    entry_id: list.entry_id.clone(),
                    position,
                    value: id.to_string(),
                    message: "not a PubMed identifier".into(),
                });
                continue;
            }
            total_raw += 1;
            by_id
                .entry(id.parse().expect("validated digits"))
                .or_default()
                .insert(list.entry_id.clone());
        }
    }
    let records: Vec<ArticleRecord> = by_id
        .into_iter()
        .map(|(id, entries)| ArticleRecord {
            source_entries: entries,
            ..ArticleRecord::pending(id.to_string())
        })
        .collect();
    let unique = records.len();
    let manifest = CohortManifest {
        records,
        created_at,
        counts: CohortCounts {
            total_raw,
            duplicates_removed: total_raw - unique,
            unique,
            not_retrievable: 0,
        },
    };
    (manifest, warnings)
}

/// Loads every `*.txt` in `dir` as one list; the entry id is the file stem.
pub fn load_citation_lists(dir: &Path) -> Result<Vec<CitationList>, StoreError> {
    let io = |source| StoreError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|source| StoreError::Io {
                path: p.clone(),
                source,
            })?;
            Ok(CitationList {
                entry_id: p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                ids: text.lines().map(str::to_string).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestMeta {
    created_at: DateTime<Utc>,
    counts: CohortCounts,
}

/// `<dir>/manifest.jsonl` holds one record per line; creation time and
/// counts sit in `<dir>/manifest_meta.json`.
pub fn write_manifest(dir: &Path, manifest: &CohortManifest) -> Result<(), StoreError> {
    let mut lines = Vec::new();
    for r in &manifest.records {
        lines.extend(serde_json::to_vec(r)?);
        lines.push(b'\n');
    }
    store::write_atomic(&dir.join("manifest.jsonl"), &lines)?;
    store::write_json(
        &dir.join("manifest_meta.json"),
        &ManifestMeta {
            created_at: manifest.created_at,
            counts: manifest.counts,
        },
    )
}

pub fn read_manifest(dir: &Path) -> Result<CohortManifest, StoreError> {
    let meta: ManifestMeta = store::read_json(&dir.join("manifest_meta.json"))?;
    let records = store::read_jsonl(&dir.join("manifest.jsonl"))?;
    Ok(CohortManifest {
        records,
        created_at: meta.created_at,
        counts: meta.counts,
    })
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("duplicate article id {0}")]
    DuplicateId(String),
    #[error("screening text present without retrieval for {0}")]
    TextWithoutRetrieval(String),
    #[error("retrieved record {0} has no screening text")]
    MissingText(String),
    #[error("publication year {year} out of range for {article_id}")]
    YearOutOfRange { article_id: String, year: i32 },
    #[error("counts inconsistent: {0}")]
    Counts(String),
}

/// Checks the record and count invariants of a manifest.
pub fn check_manifest(m: &CohortManifest, max_year: i32) -> Result<(), ManifestError> {
    let mut seen = BTreeSet::new();
    for r in &m.records {
        if !seen.insert(&r.article_id) {
            return Err(ManifestError::DuplicateId(r.article_id.clone()));
        }
        match (r.oa_status, r.screening_text.is_some()) {
            (OaStatus::Retrieved, false) => {
                return Err(ManifestError::MissingText(r.article_id.clone()))
            }
            (OaStatus::Pending | OaStatus::NotRetrievable, true) => {
                return Err(ManifestError::TextWithoutRetrieval(r.article_id.clone()))
            }
            _ => {}
        }
        if let Some(y) = r.publication_year {
            if !(1900..=max_year).contains(&y) {
                return Err(ManifestError::YearOutOfRange {
                    article_id: r.article_id.clone(),
                    year: y,
                });
            }
        }
    }
    let c = m.counts;
    if c.unique != m.records.len() || c.total_raw != c.unique + c.duplicates_removed {
        return Err(ManifestError::Counts(format!("{c:?} with {} records", m.records.len())));
    }
    Ok(())
}
