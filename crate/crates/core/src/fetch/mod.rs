//! Repository retrieval: default-branch archives from forges, latest
//! versions of deposits, extracted into a snapshot cache.
//!
//! Cache layout: `<cache>/repos/<provider>/<path of canonical root>/<retrieved_at>/`
//! holding `snapshot.json` and the extracted `files/`. Snapshots are built in
//! a `.partial` sibling and renamed into place, so a warm entry is always
//! complete.

pub mod archive;
mod kinds;
mod providers;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{fetch_with_retry, HttpClient, HttpError, HttpResponse, RateLimiter, RetryError, RetryPolicy};
use crate::linkres::{Provider, Resolution, ResolvedRepoLink};
use crate::store::{self, KeyedLocks};

pub use archive::{extract_archive, ArchiveError, ExtractLimits};
pub use kinds::{FileKind, KindRules, DEFAULT_KIND_RULES};
pub use providers::ProviderEndpoints;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetchStatus {
    Ok,
    PrivateOrMissing,
    ProviderError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub size_bytes: u64,
    pub kind: FileKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoSnapshot {
    pub canonical_root: String,
    pub provider: Provider,
    pub retrieved_at: DateTime<Utc>,
    pub ref_label: String,
    pub files: Vec<FileEntry>,
    pub fetch_status: FetchStatus,
    /// Directory holding the extracted files, for ok snapshots.
    pub content_dir: Option<PathBuf>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Failure detail for non-ok snapshots.
    #[serde(default)]
    pub detail: Option<String>,
}

impl RepoSnapshot {
    pub fn files_of(&self, kind: FileKind) -> impl Iterator<Item = &FileEntry> {
        self.files.iter().filter(move |f| f.kind == kind)
    }
}

/// At least one non-empty source file.
pub fn has_source_code(snapshot: &RepoSnapshot) -> bool {
    snapshot
        .files
        .iter()
        .any(|f| f.kind == FileKind::Source && f.size_bytes > 0)
}

pub fn classify_files(files: &[(String, u64)], rules: &KindRules) -> Vec<FileEntry> {
    files
        .iter()
        .map(|(p, s)| FileEntry {
            path: p.clone(),
            size_bytes: *s,
            kind: rules.classify(p, *s),
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("link `{0}` is not a resolved repository root")]
    Precondition(String),
    #[error("cache error at {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Failure {
    PrivateOrMissing(String),
    ProviderError(String),
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct RepoFetcher {
    pub client: HttpClient,
    pub endpoints: ProviderEndpoints,
    pub cache_dir: PathBuf,
    pub rules: KindRules,
    pub limits: ExtractLimits,
    pub max_download_bytes: u64,
    pub retry: RetryPolicy,
    limiters: HashMap<Provider, RateLimiter>,
    tokens: HashMap<Provider, String>,
    clock: Clock,
    locks: KeyedLocks,
}

impl RepoFetcher {
    /// Tokens are read from the provider's environment variable
    /// (`GITHUB_TOKEN`, `GITLAB_TOKEN`, ...) when set.
    pub fn new(client: HttpClient, endpoints: ProviderEndpoints, cache_dir: impl Into<PathBuf>) -> Self {
        let tokens = Provider::SUPPORTED
            .iter()
            .filter_map(|p| {
                let var = providers::token_env(*p)?;
                std::env::var(var).ok().filter(|t| !t.is_empty()).map(|t| (*p, t))
            })
            .collect();
        Self {
            client,
            endpoints,
            cache_dir: cache_dir.into(),
            rules: KindRules::default(),
            limits: ExtractLimits::default(),
            max_download_bytes: 2 * 1024 * 1024 * 1024,
            retry: RetryPolicy::default(),
            limiters: HashMap::new(),
            tokens,
            clock: Arc::new(Utc::now),
            locks: KeyedLocks::new(),
        }
    }

    pub fn with_rules(mut self, rules: KindRules) -> Self {
        self.rules = rules;
        self
    }

    pub fn with_limits(mut self, limits: ExtractLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_limiter(mut self, provider: Provider, limiter: RateLimiter) -> Self {
        self.limiters.insert(provider, limiter);
        self
    }

    pub fn with_token(mut self, provider: Provider, token: impl Into<String>) -> Self {
        self.tokens.insert(provider, token.into());
        self
    }

    fn headers(&self, p: Provider) -> Vec<(String, String)> {
        providers::auth_headers(p, self.tokens.get(&p).map(String::as_str))
    }

    fn map_retry(e: RetryError) -> Failure {
        match e {
            RetryError::Exhausted { attempts, last } => {
                Failure::ProviderError(format!("gave up after {attempts} attempts: {last}"))
            }
            RetryError::Fatal(e) => Failure::ProviderError(e.to_string()),
        }
    }

    fn status_failure(resp: &HttpResponse) -> Option<Failure> {
        if resp.is_success() {
            return None;
        }
        Some(match resp.status {
            401 | 403 | 404 | 409 | 410 | 451 => {
                Failure::PrivateOrMissing(format!("HTTP {} from {}", resp.status, resp.url))
            }
            s => Failure::ProviderError(format!("HTTP {s} from {}", resp.url)),
        })
    }

    pub(crate) fn call(&self, p: Provider, url: &str) -> Result<HttpResponse, Failure> {
        let headers = self.headers(p);
        let resp = fetch_with_retry(self.limiters.get(&p), &self.retry, || {
            self.client.get_following(url, &headers, 10)
        })
        .map_err(Self::map_retry)?;
        match Self::status_failure(&resp) {
            Some(f) => Err(f),
            None => Ok(resp),
        }
    }

    fn download(&self, p: Provider, url: &str, dest: &Path) -> Result<(), Failure> {
        let headers = self.headers(p);
        let resp = fetch_with_retry(self.limiters.get(&p), &self.retry, || {
            self.client.download_to(url, &headers, dest, self.max_download_bytes)
        })
        .map_err(|e| match e {
            RetryError::Fatal(HttpError::BodyTooLarge { limit, .. }) => {
                Failure::ProviderError(format!("download exceeds {limit} bytes"))
            }
            other => Self::map_retry(other),
        })?;
        match Self::status_failure(&resp) {
            Some(f) => Err(f),
            None => Ok(()),
        }
    }

    fn key_dir(&self, provider: Provider, root: &str) -> PathBuf {
        let mut dir = self.cache_dir.join("repos").join(provider.as_str());
        let segs: Vec<&str> = root
            .splitn(4, '/')
            .nth(3)
            .unwrap_or_default()
            .split('/')
            .filter(|s| !s.is_empty())
            .collect();
        if segs.len() == 1 {
            dir.push("node");
        }
        for s in segs {
            dir.push(s);
        }
        dir
    }
}

fn stamp(t: DateTime<Utc>) -> String {
    t.format("%Y%m%dT%H%M%SZ").to_string()
}

fn cache_err(path: &Path, e: impl std::fmt::Display) -> FetchError {
    FetchError::Cache {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Latest complete snapshot cached for this root, if any.
pub fn cached_snapshot(fetcher: &RepoFetcher, provider: Provider, root: &str) -> Option<RepoSnapshot> {
    let dir = fetcher.key_dir(provider, root);
    let mut stamps: Vec<PathBuf> = fs::read_dir(&dir)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_none() && p.join("snapshot.json").is_file())
        .collect();
    stamps.sort();
    let latest = stamps.pop()?;
    let mut snap: RepoSnapshot = store::read_json(&latest.join("snapshot.json")).ok()?;
    snap.content_dir = Some(latest.join("files"));
    Some(snap)
}

fn failed(link_root: &str, provider: Provider, at: DateTime<Utc>, f: Failure) -> RepoSnapshot {
    let (status, detail) = match f {
        Failure::PrivateOrMissing(d) => (FetchStatus::PrivateOrMissing, d),
        Failure::ProviderError(d) => (FetchStatus::ProviderError, d),
    };
    tracing::info!(root = link_root, ?status, %detail, "repository not fetched");
    RepoSnapshot {
        canonical_root: link_root.to_string(),
        provider,
        retrieved_at: at,
        ref_label: String::new(),
        files: Vec::new(),
        fetch_status: status,
        content_dir: None,
        warnings: Vec::new(),
        detail: Some(detail),
    }
}

/// Downloads and extracts one resolved repository, reusing a warm cache.
/// Only ok snapshots are cached; failures are reported in the returned
/// snapshot's status.
pub fn fetch_repository(link: &ResolvedRepoLink, fetcher: &RepoFetcher) -> Result<RepoSnapshot, FetchError> {
    let (Resolution::Ok, Some(root), Some(provider)) = (link.resolution, &link.canonical_root, link.provider)
    else {
        return Err(FetchError::Precondition(link.original_url.clone()));
    };
    fetcher.locks.with_lock(root, || {
        if let Some(snap) = cached_snapshot(fetcher, provider, root) {
            return Ok(snap);
        }
        let at = (fetcher.clock)();
        let plan = match providers::plan(fetcher, provider, root) {
            Ok(p) => p,
            Err(f) => return Ok(failed(root, provider, at, f)),
        };
        let final_dir = fetcher.key_dir(provider, root).join(stamp(at));
        let partial = final_dir.with_extension("partial");
        if partial.exists() {
            fs::remove_dir_all(&partial).map_err(|e| cache_err(&partial, e))?;
        }
        fs::create_dir_all(partial.join("download")).map_err(|e| cache_err(&partial, e))?;
        let files_dir = partial.join("files");
        let result = materialize(fetcher, provider, &plan, &partial, &files_dir);
        let _ = fs::remove_dir_all(partial.join("download"));
        let (ref_label, mut warnings) = match result {
            Ok(v) => v,
            Err(f) => {
                let _ = fs::remove_dir_all(&partial);
                return Ok(failed(root, provider, at, f));
            }
        };
        let listed = if files_dir.exists() {
            archive::list_files(&files_dir).map_err(|e| cache_err(&files_dir, e))?
        } else {
            Vec::new()
        };
        if listed.is_empty() {
            let _ = fs::remove_dir_all(&partial);
            return Ok(failed(
                root,
                provider,
                at,
                Failure::PrivateOrMissing("no accessible files".into()),
            ));
        }
        warnings.sort();
        let mut snap = RepoSnapshot {
            canonical_root: root.clone(),
            provider,
            retrieved_at: at,
            ref_label,
            files: classify_files(&listed, &fetcher.rules),
            fetch_status: FetchStatus::Ok,
            content_dir: None,
            warnings,
            detail: None,
        };
        store::write_json(&partial.join("snapshot.json"), &snap).map_err(|e| cache_err(&partial, e))?;
        fs::rename(&partial, &final_dir).map_err(|e| cache_err(&final_dir, e))?;
        snap.content_dir = Some(final_dir.join("files"));
        Ok(snap)
    })
}

fn materialize(
    fetcher: &RepoFetcher,
    provider: Provider,
    plan: &providers::Plan,
    partial: &Path,
    files_dir: &Path,
) -> Result<(String, Vec<String>), Failure> {
    let extract_failure = |e: ArchiveError| Failure::ProviderError(format!("extraction failed: {e}"));
    let io_failure = |e: std::io::Error| Failure::ProviderError(format!("io: {e}"));
    match plan {
        providers::Plan::Archive { url, ref_label, strip_root } => {
            let dl = partial.join("download").join("archive");
            fetcher.download(provider, url, &dl)?;
            let report = extract_archive(&dl, files_dir, fetcher.limits, *strip_root).map_err(extract_failure)?;
            Ok((ref_label.clone(), report.warnings))
        }
        providers::Plan::Files { files, ref_label } => {
            let mut warnings = Vec::new();
            fs::create_dir_all(files_dir).map_err(io_failure)?;
            let single = files.len() == 1;
            for (i, file) in files.iter().enumerate() {
                let Some(name) = archive::sanitize_member(&file.name) else {
                    warnings.push(format!("skipped unsafe file name `{}`", file.name));
                    continue;
                };
                let dl = partial.join("download").join(format!("{i}"));
                fetcher.download(provider, &file.url, &dl)?;
                let is_archive = archive::detect_format(&dl).map_err(io_failure)?.is_some();
                if is_archive {
                    let target = if single {
                        files_dir.to_path_buf()
                    } else {
                        files_dir.join(strip_archive_ext(&name))
                    };
                    if single {
                        fs::remove_dir(files_dir).map_err(io_failure)?;
                    }
                    let report = extract_archive(&dl, &target, fetcher.limits, true).map_err(extract_failure)?;
                    warnings.extend(report.warnings);
                } else {
                    let dest = files_dir.join(&name);
                    if let Some(parent) = dest.parent() {
                        fs::create_dir_all(parent).map_err(io_failure)?;
                    }
                    fs::rename(&dl, &dest).map_err(io_failure)?;
                }
            }
            Ok((ref_label.clone(), warnings))
        }
    }
}

fn strip_archive_ext(name: &str) -> String {
    let lower = name.to_ascii_lowercase();
    for ext in [".tar.gz", ".tgz", ".zip", ".tar"] {
        if lower.ends_with(ext) && name.len() > ext.len() {
            return name[..name.len() - ext.len()].to_string();
        }
    }
    format!("{name}.contents")
}
