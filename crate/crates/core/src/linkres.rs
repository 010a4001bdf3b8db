//! Repository link classification, canonicalization to repository roots and
//! DOI resolution.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::http::{fetch_with_retry, redirect_target, HttpClient, RateLimiter, RetryError, RetryPolicy};
use crate::store::{self, JsonlWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    Github,
    Gitlab,
    Gitee,
    Zenodo,
    Figshare,
    Osf,
    Unsupported,
}

impl Provider {
    pub const SUPPORTED: [Provider; 6] = [
        Provider::Github,
        Provider::Gitlab,
        Provider::Gitee,
        Provider::Zenodo,
        Provider::Figshare,
        Provider::Osf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Provider::Github => "github",
            Provider::Gitlab => "gitlab",
            Provider::Gitee => "gitee",
            Provider::Zenodo => "zenodo",
            Provider::Figshare => "figshare",
            Provider::Osf => "osf",
            Provider::Unsupported => "unsupported",
        }
    }

    pub fn is_forge(self) -> bool {
        matches!(self, Provider::Github | Provider::Gitlab | Provider::Gitee)
    }
}

impl std::fmt::Display for Provider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Ok,
    UnsupportedProvider,
    Malformed,
    ProfileOnly,
    DoiUnresolvable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedRepoLink {
    pub original_url: String,
    /// `None` when the input could not be attributed to any host.
    pub provider: Option<Provider>,
    pub canonical_root: Option<String>,
    pub resolution: Resolution,
    pub via_doi: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    Provider(Provider),
    /// Needs DOI resolution first; carries the bare DOI.
    Doi(String),
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("link points to a user or group profile, not a repository")]
    ProfileOnly,
    #[error("malformed repository link: {0}")]
    Malformed(String),
    #[error("provider is not supported")]
    Unsupported,
}

fn doi_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^10\.\d{4,9}/\S+$").unwrap())
}

pub fn is_doi(s: &str) -> bool {
    doi_regex().is_match(s)
}

const TRAILING: &[char] = &['.', ',', ';', ':', ')', ']', '}', '>', '\'', '"', '*'];
const LEADING: &[char] = &['<', '(', '[', '{', '\'', '"', '*'];

fn clean(raw: &str) -> &str {
    raw.trim()
        .trim_start_matches(LEADING)
        .trim_end_matches(|c: char| TRAILING.contains(&c) || c.is_whitespace())
        .trim()
}

/// Extracts a bare DOI from `doi:…`, `doi.org/…` URLs or bare `10.…` text.
pub fn extract_doi(raw: &str) -> Option<String> {
    let s = clean(raw);
    let lower = s.to_ascii_lowercase();
    let candidate = if let Some(rest) = lower.strip_prefix("doi:") {
        s[s.len() - rest.len()..].trim().to_string()
    } else if let Some(pos) = ["doi.org/", "dx.doi.org/"]
        .iter()
        .filter_map(|h| lower.find(h).map(|p| p + h.len()))
        .next()
    {
        let prefix = &lower[..pos];
        let host_ok = prefix
            .trim_start_matches("https://")
            .trim_start_matches("http://")
            .trim_start_matches("www.")
            .trim_start_matches("dx.")
            == "doi.org/";
        if !host_ok {
            return None;
        }
        let path = &s[pos..];
        let path = path.split(['?', '#']).next().unwrap_or_default();
        percent_decode(path)
    } else {
        s.to_string()
    };
    let candidate = candidate.trim_end_matches('/').to_string();
    is_doi(&candidate).then_some(candidate)
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            let hex = std::str::from_utf8(&bytes[i + 1..i + 3]).ok();
            if let Some(b) = hex.and_then(|h| u8::from_str_radix(h, 16).ok()) {
                out.push(b);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

/// Parses a messy link into an http(s) URL, adding a scheme when the text
/// starts with a host name.
pub fn parse_url(raw: &str) -> Option<Url> {
    let s = clean(raw);
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return None;
    }
    let lower = s.to_ascii_lowercase();
    let with_scheme = if lower.starts_with("http://") || lower.starts_with("https://") {
        s.to_string()
    } else if lower.contains("://") {
        return None;
    } else {
        let host = s.split('/').next().unwrap_or_default();
        if !host.contains('.') || host.starts_with('.') || host.contains('@') {
            return None;
        }
        format!("https://{s}")
    };
    let url = Url::parse(&with_scheme).ok()?;
    let host = url.host_str()?;
    if !host.contains('.') && host != "localhost" {
        return None;
    }
    Some(url)
}

fn provider_for_host(host: &str) -> Provider {
    let h = host.trim_end_matches('.');
    let h = h.strip_prefix("www.").unwrap_or(h);
    match h {
        "github.com" | "raw.githubusercontent.com" => Provider::Github,
        "gitlab.com" => Provider::Gitlab,
        "gitee.com" => Provider::Gitee,
        "zenodo.org" => Provider::Zenodo,
        "osf.io" => Provider::Osf,
        "figshare.com" => Provider::Figshare,
        h if h.ends_with(".figshare.com") && h != "ndownloader.figshare.com" => Provider::Figshare,
        _ => Provider::Unsupported,
    }
}

/// Host-based classification. DOI inputs are routed to resolution first.
pub fn classify_provider(url: &str) -> Classification {
    if let Some(doi) = extract_doi(url) {
        return Classification::Doi(doi);
    }
    match parse_url(url) {
        Some(u) => Classification::Provider(provider_for_host(u.host_str().unwrap_or_default())),
        None => Classification::Malformed,
    }
}

fn segments(u: &Url) -> Vec<String> {
    u.path_segments()
        .map(|s| {
            s.map(|p| p.trim_end_matches(TRAILING))
                .filter(|p| !p.is_empty())
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

const GITHUB_PROFILE: &[&str] = &["orgs", "users", "sponsors"];
const GITHUB_RESERVED: &[&str] = &[
    "settings", "topics", "marketplace", "explore", "search", "features", "about", "login",
    "notifications", "apps", "collections", "trending", "pricing", "enterprise", "issues",
    "pulls", "codespaces", "new", "organizations", "site", "security", "readme",
];
const GITLAB_PROFILE: &[&str] = &["groups", "users"];
const GITLAB_RESERVED: &[&str] = &["explore", "dashboard", "help", "search", "projects", "-", "api"];
const GITEE_PROFILE: &[&str] = &["organizations"];
const GITEE_RESERVED: &[&str] = &["explore", "search", "login", "help", "enterprises", "api"];

fn forge_root(host: &str, segs: &[String], profile: &[&str], reserved: &[&str]) -> Result<String, NormalizeError> {
    let Some(first) = segs.first() else {
        return Err(NormalizeError::Malformed("no repository path".into()));
    };
    let first_lower = first.to_ascii_lowercase();
    if profile.contains(&first_lower.as_str()) {
        return Err(NormalizeError::ProfileOnly);
    }
    if reserved.contains(&first_lower.as_str()) {
        return Err(NormalizeError::Malformed(format!("`/{first}` is not a repository path")));
    }
    let owner = first.trim_start_matches('@');
    if segs.len() < 2 {
        return Err(NormalizeError::ProfileOnly);
    }
    let name = segs[1].strip_suffix(".git").unwrap_or(&segs[1]);
    if owner.is_empty() || name.is_empty() || name == "." || name == ".." {
        return Err(NormalizeError::Malformed("empty owner or name".into()));
    }
    Ok(format!("https://{host}/{owner}/{name}"))
}

/// Legacy GitLab page suffixes that appear without the `/-/` separator.
const GITLAB_SUFFIX: &[&str] = &[
    "tree", "blob", "raw", "commits", "commit", "tags", "releases", "issues", "merge_requests", "wikis", "archive",
];

fn gitlab_root(segs: &[String]) -> Result<String, NormalizeError> {
    // `/-/` separates the project path (which may include subgroups) from
    // tree/blob/release suffixes
    let dash = segs.iter().position(|s| s == "-");
    if dash.is_some_and(|d| d < 2) {
        return Err(NormalizeError::Malformed("no project before `/-/`".into()));
    }
    let end = (2..dash.unwrap_or(segs.len()))
        .find(|&i| GITLAB_SUFFIX.contains(&segs[i].as_str()))
        .or(dash)
        .unwrap_or(segs.len());
    if end < 2 {
        return forge_root("gitlab.com", segs, GITLAB_PROFILE, GITLAB_RESERVED);
    }
    let mut path: Vec<String> = segs[..end].to_vec();
    let last = path.last_mut().expect("end >= 2");
    if let Some(stripped) = last.strip_suffix(".git") {
        *last = stripped.to_string();
    }
    if path.iter().any(|p| p.is_empty() || p == "." || p == "..") {
        return Err(NormalizeError::Malformed("empty group or project".into()));
    }
    let first = path[0].to_ascii_lowercase();
    if GITLAB_PROFILE.contains(&first.as_str()) {
        return Err(NormalizeError::ProfileOnly);
    }
    if GITLAB_RESERVED.contains(&first.as_str()) {
        return Err(NormalizeError::Malformed(format!("`/{}` is not a repository path", path[0])));
    }
    Ok(format!("https://gitlab.com/{}", path.join("/")))
}

fn digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn zenodo_root(segs: &[String]) -> Result<String, NormalizeError> {
    let segs: Vec<&str> = segs.iter().map(String::as_str).collect();
    let segs = match segs.as_slice() {
        ["api", rest @ ..] => rest.to_vec(),
        s => s.to_vec(),
    };
    let id = match segs.as_slice() {
        ["record" | "records" | "deposit" | "uploads", id, ..] if digits(id) => id.to_string(),
        ["doi", prefix, suffix, ..] if *prefix == "10.5281" => suffix
            .strip_prefix("zenodo.")
            .filter(|d| digits(d))
            .ok_or_else(|| NormalizeError::Malformed("unrecognized Zenodo DOI".into()))?
            .to_string(),
        ["communities", _, ..] => return Err(NormalizeError::ProfileOnly),
        _ => return Err(NormalizeError::Malformed("not a Zenodo record path".into())),
    };
    Ok(format!("https://zenodo.org/records/{id}"))
}

fn figshare_root(segs: &[String]) -> Result<String, NormalizeError> {
    match segs.first().map(String::as_str) {
        Some("articles") => {}
        Some("authors") => return Err(NormalizeError::ProfileOnly),
        _ => return Err(NormalizeError::Malformed("not a Figshare article path".into())),
    }
    let id = segs[1..]
        .iter()
        .filter(|s| digits(s) && s.len() >= 5)
        .next_back()
        .ok_or_else(|| NormalizeError::Malformed("Figshare article id not found".into()))?;
    Ok(format!("https://figshare.com/articles/{id}"))
}

const OSF_RESERVED: &[&str] = &[
    "preprints", "registries", "institutions", "search", "meetings", "collections", "dashboard",
    "myprojects", "settings", "login", "register", "support", "explore",
];

fn osf_root(segs: &[String]) -> Result<String, NormalizeError> {
    let Some(first) = segs.first() else {
        return Err(NormalizeError::Malformed("no OSF project id".into()));
    };
    let id = first.to_ascii_lowercase();
    if OSF_RESERVED.contains(&id.as_str()) {
        return Err(NormalizeError::Malformed(format!("`/{first}` is not an OSF project")));
    }
    if id.len() != 5 || !id.bytes().all(|b| b.is_ascii_alphanumeric()) {
        return Err(NormalizeError::Malformed(format!("`{first}` is not an OSF id")));
    }
    Ok(format!("https://osf.io/{id}"))
}

/// Canonical repository root: `https://host/owner/name` for forges, the
/// record landing form for deposits. Query strings and fragments are
/// dropped.
pub fn normalize_to_root(url: &str, provider: Provider) -> Result<String, NormalizeError> {
    if provider == Provider::Unsupported {
        return Err(NormalizeError::Unsupported);
    }
    let u = parse_url(url).ok_or_else(|| NormalizeError::Malformed("not a URL".into()))?;
    let host = u.host_str().unwrap_or_default();
    if provider_for_host(host) != provider {
        return Err(NormalizeError::Malformed(format!("host `{host}` is not {provider}")));
    }
    let segs = segments(&u);
    match provider {
        Provider::Github => {
            if host.ends_with("raw.githubusercontent.com") {
                forge_root("github.com", &segs, &[], &[])
            } else {
                forge_root("github.com", &segs, GITHUB_PROFILE, GITHUB_RESERVED)
            }
        }
        Provider::Gitlab => gitlab_root(&segs),
        Provider::Gitee => forge_root("gitee.com", &segs, GITEE_PROFILE, GITEE_RESERVED),
        Provider::Zenodo => zenodo_root(&segs),
        Provider::Figshare => figshare_root(&segs),
        Provider::Osf => osf_root(&segs),
        Provider::Unsupported => unreachable!(),
    }
}

/// Resolution of a link that has already been classified as a URL (no DOI
/// step).
pub fn resolve_url(original: &str, url: &str, via_doi: bool) -> ResolvedRepoLink {
    let mut link = ResolvedRepoLink {
        original_url: original.to_string(),
        provider: None,
        canonical_root: None,
        resolution: Resolution::Malformed,
        via_doi,
    };
    let Some(u) = parse_url(url) else {
        return link;
    };
    let provider = provider_for_host(u.host_str().unwrap_or_default());
    link.provider = Some(provider);
    if provider == Provider::Unsupported {
        link.resolution = Resolution::UnsupportedProvider;
        return link;
    }
    match normalize_to_root(url, provider) {
        Ok(root) => {
            link.canonical_root = Some(root);
            link.resolution = Resolution::Ok;
        }
        Err(NormalizeError::ProfileOnly) => link.resolution = Resolution::ProfileOnly,
        Err(_) => link.resolution = Resolution::Malformed,
    }
    link
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DoiError {
    #[error("`{0}` is not a DOI")]
    InvalidDoi(String),
    #[error("DOI {doi} did not resolve: {reason}")]
    Unresolvable { doi: String, reason: String },
    #[error("DOI {doi}: transient failure: {message}")]
    Transient { doi: String, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedDoi {
    doi: String,
    target: Option<String>,
    reason: Option<String>,
}

pub struct DoiResolver {
    client: HttpClient,
    base_url: String,
    max_hops: usize,
    limiter: Option<RateLimiter>,
    retry: RetryPolicy,
    cache: Mutex<HashMap<String, Result<String, String>>>,
    cache_file: Option<Mutex<JsonlWriter>>,
}

pub const DEFAULT_DOI_RESOLVER: &str = "https://doi.org";

impl DoiResolver {
    pub fn new(client: HttpClient, base_url: impl Into<String>) -> Self {
        Self {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            max_hops: 10,
            limiter: None,
            retry: RetryPolicy::default(),
            cache: Mutex::new(HashMap::new()),
            cache_file: None,
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

    /// Loads earlier resolutions from `path` and appends new ones to it.
    pub fn with_cache_file(mut self, path: &Path) -> Result<Self, store::StoreError> {
        let rows: Vec<CachedDoi> = store::read_jsonl(path)?;
        {
            let mut cache = self.cache.lock().unwrap();
            for r in rows {
                let v = match r.target {
                    Some(t) => Ok(t),
                    None => Err(r.reason.unwrap_or_default()),
                };
                cache.insert(r.doi, v);
            }
        }
        self.cache_file = Some(Mutex::new(JsonlWriter::open(path)?));
        Ok(self)
    }

    /// Follows the resolver's redirects to a landing URL. The chain stops
    /// early at the first hop pointing at a supported provider host, so
    /// the provider itself is not contacted here.
    pub fn resolve_doi(&self, doi: &str) -> Result<String, DoiError> {
        let doi = extract_doi(doi).ok_or_else(|| DoiError::InvalidDoi(doi.to_string()))?;
        if let Some(hit) = self.cache.lock().unwrap().get(&doi) {
            return hit.clone().map_err(|reason| DoiError::Unresolvable {
                doi: doi.clone(),
                reason,
            });
        }
        let result = self.walk(&doi);
        let cacheable = match &result {
            Ok(t) => Some(Ok(t.clone())),
            Err(DoiError::Unresolvable { reason, .. }) => Some(Err(reason.clone())),
            Err(_) => None,
        };
        if let Some(v) = cacheable {
            self.cache.lock().unwrap().insert(doi.clone(), v.clone());
            if let Some(file) = &self.cache_file {
                let row = CachedDoi {
                    doi: doi.clone(),
                    target: v.as_ref().ok().cloned(),
                    reason: v.err(),
                };
                if let Err(e) = file.lock().unwrap().append(&row) {
                    tracing::warn!(error = %e, "could not persist DOI cache entry");
                }
            }
        }
        result
    }

    fn walk(&self, doi: &str) -> Result<String, DoiError> {
        let unresolvable = |reason: String| DoiError::Unresolvable {
            doi: doi.to_string(),
            reason,
        };
        let mut current = format!("{}/{}", self.base_url, doi);
        let mut seen = vec![current.clone()];
        for _ in 0..=self.max_hops {
            let resp = fetch_with_retry(self.limiter.as_ref(), &self.retry, || self.client.get(&current, &[]))
                .map_err(|e| match e {
                    RetryError::Exhausted { last, .. } => DoiError::Transient {
                        doi: doi.to_string(),
                        message: last,
                    },
                    RetryError::Fatal(e) if e.is_transient() => DoiError::Transient {
                        doi: doi.to_string(),
                        message: e.to_string(),
                    },
                    RetryError::Fatal(e) => unresolvable(e.to_string()),
                })?;
            if resp.is_redirect() {
                let next = redirect_target(&current, &resp).map_err(|e| unresolvable(e.to_string()))?;
                if seen.contains(&next) {
                    return Err(unresolvable(format!("redirect loop at {next}")));
                }
                if let Some(u) = parse_url(&next) {
                    if provider_for_host(u.host_str().unwrap_or_default()) != Provider::Unsupported {
                        return Ok(next);
                    }
                }
                seen.push(next.clone());
                current = next;
                continue;
            }
            if resp.is_success() {
                return Ok(current);
            }
            return Err(unresolvable(format!("HTTP {} at {current}", resp.status)));
        }
        Err(unresolvable(format!("more than {} redirects", self.max_hops)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error(transparent)]
    Doi(DoiError),
}

/// Classifies, resolves (for DOIs) and canonicalizes one screened link.
/// Without a resolver, DOIs are reported unresolvable.
pub fn resolve_link(raw: &str, resolver: Option<&DoiResolver>) -> Result<ResolvedRepoLink, LinkError> {
    match classify_provider(raw) {
        Classification::Malformed => Ok(ResolvedRepoLink {
            original_url: raw.to_string(),
            provider: None,
            canonical_root: None,
            resolution: Resolution::Malformed,
            via_doi: false,
        }),
        Classification::Provider(_) => Ok(resolve_url(raw, raw, false)),
        Classification::Doi(doi) => {
            let unresolved = ResolvedRepoLink {
                original_url: raw.to_string(),
                provider: None,
                canonical_root: None,
                resolution: Resolution::DoiUnresolvable,
                via_doi: true,
            };
            let Some(resolver) = resolver else {
                return Ok(unresolved);
            };
            match resolver.resolve_doi(&doi) {
                Ok(target) => Ok(resolve_url(raw, &target, true)),
                Err(DoiError::Unresolvable { .. }) => Ok(unresolved),
                Err(e) => Err(LinkError::Doi(e)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn root(u: &str) -> Result<String, NormalizeError> {
        match classify_provider(u) {
            Classification::Provider(p) => normalize_to_root(u, p),
            other => panic!("{u}: {other:?}"),
        }
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_provider("https://github.com/user/proj"), Classification::Provider(Provider::Github));
        assert_eq!(classify_provider("https://bitbucket.org/x/y"), Classification::Provider(Provider::Unsupported));
        assert_eq!(
            classify_provider("https://doi.org/10.5281/zenodo.4077342"),
            Classification::Doi("10.5281/zenodo.4077342".into())
        );
        assert_eq!(classify_provider("10.6084/m9.figshare.123"), Classification::Doi("10.6084/m9.figshare.123".into()));
        assert_eq!(classify_provider("code available on request"), Classification::Malformed);
        assert_eq!(classify_provider("abc"), Classification::Malformed);
    }

    #[test]
    fn forge_suffixes_stripped() {
        assert_eq!(root("https://github.com/U/R/tree/main/src").unwrap(), "https://github.com/U/R");
        assert_eq!(root("HTTPS://WWW.GitHub.com/U/R.git").unwrap(), "https://github.com/U/R");
        assert_eq!(root("https://gitlab.com/g/sub/p/-/blob/main/x.py").unwrap(), "https://gitlab.com/g/sub/p");
        assert_eq!(root("github.com/U").unwrap_err(), NormalizeError::ProfileOnly);
        assert!(matches!(root("https://github.com/topics/ml"), Err(NormalizeError::Malformed(_))));
    }

    #[test]
    fn zenodo_forms_agree() {
        assert_eq!(root("https://zenodo.org/record/4077342").unwrap(), "https://zenodo.org/records/4077342");
        assert_eq!(
            root("https://zenodo.org/doi/10.5281/zenodo.4077342").unwrap(),
            "https://zenodo.org/records/4077342"
        );
    }

    #[test]
    fn doi_extraction() {
        assert_eq!(extract_doi("doi: 10.5281/zenodo.1").as_deref(), Some("10.5281/zenodo.1"));
        assert_eq!(extract_doi("https://dx.doi.org/10.5281%2Fzenodo.1").as_deref(), Some("10.5281/zenodo.1"));
        assert_eq!(extract_doi("https://notdoi.org/10.5281/zenodo.1"), None);
        assert_eq!(extract_doi("abc"), None);
    }

    #[test]
    fn resolve_url_invariants() {
        let l = resolve_url("x", "https://bitbucket.org/a/b", false);
        assert_eq!(l.resolution, Resolution::UnsupportedProvider);
        assert_eq!(l.provider, Some(Provider::Unsupported));
        assert!(l.canonical_root.is_none());
        let l = resolve_url("x", "https://osf.io/AbC12/files", false);
        assert_eq!(l.canonical_root.as_deref(), Some("https://osf.io/abc12"));
    }

    #[test]
    fn invalid_doi_is_precondition_error() {
        let r = DoiResolver::new(HttpClient::new(Default::default()), "http://127.0.0.1:9");
        assert_eq!(r.resolve_doi("abc"), Err(DoiError::InvalidDoi("abc".into())));
    }
}
