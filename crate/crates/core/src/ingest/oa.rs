//! Open-access full-text retrieval with an on-disk cache.
//!
//! Layout under the cache root:
//! `pmcid/<article_id>.txt` (resolved PMC id, empty when none),
//! `fulltext/<article_id>.xml` (raw document) and
//! `fulltext/<article_id>.unavailable` (documented unavailability).

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::jats::{meta_from_tree, parse_tree, preprocess_tree, PreprocessError};
use super::{ArticleRecord, OaStatus};
use crate::http::{fetch_with_retry, HttpClient, HttpError, RateLimiter, RetryError, RetryPolicy};
use crate::store::{self, KeyedLocks};

/// URL templates. `idconv` maps `{pmid}` to a PMC id; when absent the
/// full-text template is filled with `{pmid}` directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OaEndpoint {
    pub idconv: Option<String>,
    pub fulltext: String,
}

impl Default for OaEndpoint {
    fn default() -> Self {
        Self {
            idconv: Some(
                "https://www.ncbi.nlm.nih.gov/pmc/utils/idconv/v1.0/?ids={pmid}&format=json".into(),
            ),
            fulltext: "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/efetch.fcgi?db=pmc&id={pmcid}"
                .into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum FulltextError {
    #[error("{article_id}: transient failure, retry later: {message}")]
    Retryable { article_id: String, message: String },
    #[error("{article_id}: malformed response: {message}")]
    Parse { article_id: String, message: String },
    #[error("{article_id}: {source}")]
    Http {
        article_id: String,
        #[source]
        source: HttpError,
    },
    #[error("{article_id}: cache error: {message}")]
    Cache { article_id: String, message: String },
}

impl FulltextError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, FulltextError::Retryable { .. })
    }
}

pub struct FulltextFetcher {
    pub client: HttpClient,
    pub endpoint: OaEndpoint,
    pub cache_dir: PathBuf,
    pub limiter: Option<RateLimiter>,
    pub retry: RetryPolicy,
    /// Upper bound for accepted publication years.
    pub max_year: i32,
    locks: KeyedLocks,
}

impl FulltextFetcher {
    pub fn new(client: HttpClient, endpoint: OaEndpoint, cache_dir: impl Into<PathBuf>) -> Self {
        use chrono::Datelike;
        Self {
            client,
            endpoint,
            cache_dir: cache_dir.into(),
            limiter: None,
            retry: RetryPolicy::default(),
            max_year: chrono::Utc::now().year() + 1,
            locks: KeyedLocks::new(),
        }
    }

    pub fn with_limiter(mut self, limiter: RateLimiter) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn xml_path(&self, id: &str) -> PathBuf {
        self.cache_dir.join("fulltext").join(format!("{id}.xml"))
    }

    fn marker_path(&self, id: &str) -> PathBuf {
        self.cache_dir.join("fulltext").join(format!("{id}.unavailable"))
    }

    fn pmcid_path(&self, id: &str) -> PathBuf {
        self.cache_dir.join("pmcid").join(format!("{id}.txt"))
    }
}

enum Download {
    Document(Vec<u8>, Option<String>),
    Unavailable(String),
}

/// Retrieves and preprocesses one article. Records that are not pending
/// are returned unchanged; a warm cache never touches the network.
pub fn fetch_fulltext(
    record: &ArticleRecord,
    fetcher: &FulltextFetcher,
) -> Result<ArticleRecord, FulltextError> {
    if record.oa_status != OaStatus::Pending {
        return Ok(record.clone());
    }
    let id = record.article_id.clone();
    fetcher.locks.with_lock(&id, || {
        let mut out = record.clone();
        if fetcher.marker_path(&id).exists() {
            out.oa_status = OaStatus::NotRetrievable;
            out.pmcid = read_cached_pmcid(fetcher, &id).flatten();
            return Ok(out);
        }
        let xml_path = fetcher.xml_path(&id);
        let raw = match fs::read(&xml_path) {
            Ok(bytes) => {
                out.pmcid = read_cached_pmcid(fetcher, &id).flatten();
                bytes
            }
            Err(_) => match download(fetcher, &id)? {
                Download::Document(bytes, pmcid) => {
                    out.pmcid = pmcid;
                    bytes
                }
                Download::Unavailable(why) => {
                    tracing::info!(article = %id, %why, "full text not retrievable");
                    store::write_atomic(&fetcher.marker_path(&id), why.as_bytes())
                        .map_err(|e| cache_err(&id, e))?;
                    out.oa_status = OaStatus::NotRetrievable;
                    return Ok(out);
                }
            },
        };
        let text = String::from_utf8_lossy(&raw);
        let tree = parse_tree(&text).map_err(|e| FulltextError::Parse {
            article_id: id.clone(),
            message: e.to_string(),
        })?;
        let meta = meta_from_tree(&tree, fetcher.max_year);
        out.title = meta.title.or(out.title);
        out.journal = meta.journal.or(out.journal);
        out.publication_year = meta.publication_year.or(out.publication_year);
        if out.pmcid.is_none() {
            out.pmcid = meta.pmcid;
        }
        match preprocess_tree(&tree) {
            Ok(t) => {
                out.oa_status = OaStatus::Retrieved;
                out.screening_text = Some(t);
            }
            Err(PreprocessError::EmptyText) => {
                // open-access record without body text (e.g. scanned PDF only)
                out.oa_status = OaStatus::NotRetrievable;
            }
            Err(e) => {
                return Err(FulltextError::Parse {
                    article_id: id.clone(),
                    message: e.to_string(),
                })
            }
        }
        Ok(out)
    })
}

fn cache_err(id: &str, e: impl std::fmt::Display) -> FulltextError {
    FulltextError::Cache {
        article_id: id.to_string(),
        message: e.to_string(),
    }
}

fn read_cached_pmcid(fetcher: &FulltextFetcher, id: &str) -> Option<Option<String>> {
    let text = fs::read_to_string(fetcher.pmcid_path(id)).ok()?;
    let t = text.trim();
    Some((!t.is_empty()).then(|| t.to_string()))
}

fn get(fetcher: &FulltextFetcher, id: &str, url: &str) -> Result<crate::http::HttpResponse, FulltextError> {
    fetch_with_retry(fetcher.limiter.as_ref(), &fetcher.retry, || {
        fetcher.client.get_following(url, &[], 5)
    })
    .map_err(|e| match e {
        RetryError::Exhausted { last, .. } => FulltextError::Retryable {
            article_id: id.to_string(),
            message: last,
        },
        RetryError::Fatal(source) => FulltextError::Http {
            article_id: id.to_string(),
            source,
        },
    })
}

fn resolve_pmcid(fetcher: &FulltextFetcher, id: &str, template: &str) -> Result<Option<String>, FulltextError> {
    if let Some(cached) = read_cached_pmcid(fetcher, id) {
        return Ok(cached);
    }
    let resp = get(fetcher, id, &template.replace("{pmid}", id))?;
    let pmcid = if resp.is_success() {
        #[derive(Deserialize)]
        struct Conv {
            #[serde(default)]
            records: Vec<ConvRecord>,
        }
        #[derive(Deserialize)]
        struct ConvRecord {
            pmcid: Option<String>,
        }
        let conv: Conv = serde_json::from_slice(&resp.body).map_err(|e| FulltextError::Parse {
            article_id: id.to_string(),
            message: format!("id conversion response: {e}"),
        })?;
        conv.records.into_iter().find_map(|r| r.pmcid)
    } else if matches!(resp.status, 400 | 404 | 410) {
        None
    } else {
        return Err(FulltextError::Retryable {
            article_id: id.to_string(),
            message: format!("id conversion returned HTTP {}", resp.status),
        });
    };
    store::write_atomic(&fetcher.pmcid_path(id), pmcid.as_deref().unwrap_or("").as_bytes())
        .map_err(|e| cache_err(id, e))?;
    Ok(pmcid)
}

fn download(fetcher: &FulltextFetcher, id: &str) -> Result<Download, FulltextError> {
    let pmcid = match &fetcher.endpoint.idconv {
        Some(t) => match resolve_pmcid(fetcher, id, t)? {
            Some(p) => Some(p),
            None => return Ok(Download::Unavailable("no PMC identifier".into())),
        },
        None => None,
    };
    let url = fetcher
        .endpoint
        .fulltext
        .replace("{pmid}", id)
        .replace("{pmcid}", pmcid.as_deref().unwrap_or(id));
    let resp = get(fetcher, id, &url)?;
    if matches!(resp.status, 400 | 404 | 410) {
        return Ok(Download::Unavailable(format!("HTTP {}", resp.status)));
    }
    if !resp.is_success() {
        return Err(FulltextError::Retryable {
            article_id: id.to_string(),
            message: format!("full text returned HTTP {}", resp.status),
        });
    }
    if resp.body.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(Download::Unavailable("empty response".into()));
    }
    // validate before caching so a bad body is never stored
    let text = String::from_utf8_lossy(&resp.body);
    parse_tree(&text).map_err(|e| FulltextError::Parse {
        article_id: id.to_string(),
        message: e.to_string(),
    })?;
    store::write_atomic(&fetcher.xml_path(id), &resp.body).map_err(|e| cache_err(id, e))?;
    Ok(Download::Document(resp.body, pmcid))
}
