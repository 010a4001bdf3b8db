//! Pipeline configuration: a TOML file with strict keys and defaults.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fetch::ProviderEndpoints;
use crate::report::ReportParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Directory of `<entry>.txt` citation lists read by `ingest`.
    pub citations_dir: Option<PathBuf>,
    /// Global concurrency budget shared by all stages.
    pub max_workers: usize,
    pub backend: BackendConfig,
    pub rate_limits: RateLimits,
    pub thresholds: ReportParams,
    pub stages: StageToggles,
    pub tables: Tables,
    pub endpoints: Endpoints,
    pub http: HttpConfig,
    pub compile: CompileConfig,
    pub annotations: Annotations,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cache_dir: PathBuf::from("cache"),
            out_dir: PathBuf::from("out"),
            citations_dir: None,
            max_workers: 4,
            backend: BackendConfig::default(),
            rate_limits: RateLimits::default(),
            thresholds: ReportParams::default(),
            stages: StageToggles::default(),
            tables: Tables::default(),
            endpoints: Endpoints::default(),
            http: HttpConfig::default(),
            compile: CompileConfig::default(),
            annotations: Annotations::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    None,
    Keyword,
    Scripted,
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// JSON script for the scripted backend.
    pub script: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible API for the chat backend.
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Environment variable holding the API key.
    pub api_key_env: Option<String>,
    /// Consult the backend for repository assessment, not only screening.
    pub assess_repositories: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Keyword,
            script: None,
            endpoint: None,
            model: None,
            api_key_env: None,
            assess_repositories: true,
        }
    }
}

/// Requests per second, per endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateLimits {
    pub oa: f64,
    pub doi: f64,
    pub github: f64,
    pub gitlab: f64,
    pub gitee: f64,
    pub zenodo: f64,
    pub figshare: f64,
    pub osf: f64,
    pub backend: f64,
}

impl Default for RateLimits {
    fn default() -> Self {
        Self {
            oa: 3.0,
            doi: 5.0,
            github: 1.0,
            gitlab: 2.0,
            gitee: 1.0,
            zenodo: 1.0,
            figshare: 1.0,
            osf: 1.0,
            backend: 1.0,
        }
    }
}

impl RateLimits {
    pub fn entries(&self) -> [(&'static str, f64); 9] {
        [
            ("oa", self.oa),
            ("doi", self.doi),
            ("github", self.github),
            ("gitlab", self.gitlab),
            ("gitee", self.gitee),
            ("zenodo", self.zenodo),
            ("figshare", self.figshare),
            ("osf", self.osf),
            ("backend", self.backend),
        ]
    }
}

/// Stages run by `run_all`. Explicit single-stage runs ignore these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub ingest: bool,
    pub screen: bool,
    pub resolve: bool,
    pub fetch: bool,
    pub compile: bool,
    pub assess: bool,
    pub evaluate: bool,
    pub report: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            ingest: true,
            screen: true,
            resolve: true,
            fetch: true,
            compile: true,
            assess: true,
            evaluate: false,
            report: true,
        }
    }
}

/// Replacement pattern tables; the bundled ones are used when unset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tables {
    pub kinds: Option<PathBuf>,
    pub detectors: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoints {
    /// PMID to PMCID converter with `{pmid}`; empty to use PMIDs directly.
    pub oa_idconv: String,
    /// Full-text URL with `{pmcid}` or `{pmid}`.
    pub oa_fulltext: String,
    pub doi_resolver: String,
    pub providers: ProviderEndpoints,
}

impl Default for Endpoints {
    fn default() -> Self {
        let oa = crate::ingest::OaEndpoint::default();
        Self {
            oa_idconv: oa.idconv.unwrap_or_default(),
            oa_fulltext: oa.fulltext,
            doi_resolver: crate::linkres::DEFAULT_DOI_RESOLVER.to_string(),
            providers: ProviderEndpoints::default(),
        }
    }
}

impl Endpoints {
    pub fn oa(&self) -> crate::ingest::OaEndpoint {
        crate::ingest::OaEndpoint {
            idconv: Some(self.oa_idconv.clone()).filter(|s| !s.is_empty()),
            fulltext: self.oa_fulltext.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub user_agent: String,
    pub timeout_secs: f64,
    /// `host` or `host:port` entries; unset allows any host.
    pub allowed_hosts: Option<Vec<String>>,
    pub retry_attempts: u32,
    pub retry_base_delay_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            user_agent: concat!("repro-audit/", env!("CARGO_PKG_VERSION")).to_string(),
            timeout_secs: 60.0,
            allowed_hosts: None,
            retry_attempts: 3,
            retry_base_delay_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompileConfig {
    /// Backend context budget in tokens; oversized repositories are
    /// recompiled with capped source files.
    pub budget_tokens: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Annotations {
    pub articles: Option<PathBuf>,
    pub repositories: Option<PathBuf>,
}

/// Keys that may appear although the defaults leave them unset.
const OPTIONAL_KEYS: [&str; 12] = [
    "citations_dir",
    "backend.script",
    "backend.endpoint",
    "backend.model",
    "backend.api_key_env",
    "thresholds.guideline_split",
    "tables.kinds",
    "tables.detectors",
    "http.allowed_hosts",
    "compile.budget_tokens",
    "annotations.articles",
    "annotations.repositories",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid configuration: {}", .issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl ConfigError {
    pub(crate) fn one(field: &str, message: impl Into<String>) -> Self {
        Self {
            issues: vec![ConfigIssue {
                field: field.to_string(),
                message: message.into(),
            }],
        }
    }

    pub fn fields(&self) -> BTreeSet<&str> {
        self.issues.iter().map(|i| i.field.as_str()).collect()
    }
}

fn known_keys() -> BTreeSet<String> {
    let table = toml::Table::try_from(PipelineConfig::default()).expect("default config serializes");
    let mut keys = BTreeSet::new();
    fn walk(prefix: &str, t: &toml::Table, keys: &mut BTreeSet<String>) {
        for (k, v) in t {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            if let toml::Value::Table(inner) = v {
                walk(&path, inner, keys);
            }
            keys.insert(path);
        }
    }
    walk("", &table, &mut keys);
    keys.extend(OPTIONAL_KEYS.iter().map(|k| k.to_string()));
    keys
}

fn unknown_keys(t: &toml::Table, prefix: &str, known: &BTreeSet<String>, out: &mut Vec<ConfigIssue>) {
    for (k, v) in t {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        if !known.contains(&path) {
            out.push(ConfigIssue {
                field: path,
                message: "unknown key".into(),
            });
            continue;
        }
        if let toml::Value::Table(inner) = v {
            unknown_keys(inner, &path, known, out);
        }
    }
}

impl PipelineConfig {
    /// Parses without checking paths. Every unknown key is reported.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        match parse_collect(text) {
            (Some(c), issues) if issues.is_empty() => Ok(c),
            (_, issues) => Err(ConfigError { issues }),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Relative paths are taken relative to `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.cache_dir);
        fix(&mut self.out_dir);
        for p in [
            &mut self.citations_dir,
            &mut self.backend.script,
            &mut self.tables.kinds,
            &mut self.tables.detectors,
            &mut self.annotations.articles,
            &mut self.annotations.repositories,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Every semantic problem, in field order.
    pub fn issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut push = |field: &str, message: String| {
            out.push(ConfigIssue {
                field: field.to_string(),
                message,
            })
        };
        for (name, path) in [("cache_dir", &self.cache_dir), ("out_dir", &self.out_dir)] {
            if let Err(m) = creatable_dir(path) {
                push(name, m);
            }
        }
        if let Some(p) = &self.citations_dir {
            if !p.is_dir() {
                push("citations_dir", format!("{} is not a directory", p.display()));
            }
        }
        if self.max_workers == 0 {
            push("max_workers", "must be at least 1".into());
        }
        for (name, rate) in self.rate_limits.entries() {
            if !(rate.is_finite() && rate > 0.0) {
                push(&format!("rate_limits.{name}"), format!("must be a positive number, got {rate}"));
            }
        }
        match self.backend.kind {
            BackendKind::Scripted => match &self.backend.script {
                None => push("backend.script", "required for the scripted backend".into()),
                Some(p) if !p.is_file() => push("backend.script", format!("{} does not exist", p.display())),
                Some(_) => {}
            },
            BackendKind::Chat => {
                if self.backend.endpoint.as_deref().is_none_or(str::is_empty) {
                    push("backend.endpoint", "required for the chat backend".into());
                }
                if self.backend.model.as_deref().is_none_or(str::is_empty) {
                    push("backend.model", "required for the chat backend".into());
                }
            }
            BackendKind::None | BackendKind::Keyword => {}
        }
        for (name, path) in [
            ("tables.kinds", &self.tables.kinds),
            ("tables.detectors", &self.tables.detectors),
            ("annotations.articles", &self.annotations.articles),
            ("annotations.repositories", &self.annotations.repositories),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    push(name, format!("{} does not exist", p.display()));
                }
            }
        }
        if !(self.http.timeout_secs.is_finite() && self.http.timeout_secs > 0.0) {
            push("http.timeout_secs", format!("must be a positive number, got {}", self.http.timeout_secs));
        }
        if self.http.retry_attempts == 0 {
            push("http.retry_attempts", "must be at least 1".into());
        }
        if self.endpoints.oa_fulltext.is_empty() {
            push("endpoints.oa_fulltext", "must not be empty".into());
        }
        if url::Url::parse(&self.endpoints.doi_resolver).is_err() {
            push("endpoints.doi_resolver", "not a URL".into());
        }
        if let Some(0) = self.compile.budget_tokens {
            push("compile.budget_tokens", "must be positive".into());
        }
        if let Some((a, b)) = &self.thresholds.guideline_split {
            if a == b {
                push("thresholds.guideline_split", "the two entries must differ".into());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues })
        }
    }
}

/// Parses what it can: unknown keys are reported and dropped so that the
/// rest of the file can still be type-checked.
fn parse_collect(text: &str) -> (Option<PipelineConfig>, Vec<ConfigIssue>) {
    let mut table: toml::Table = match text.parse() {
        Ok(t) => t,
        Err(e) => {
            let e: toml::de::Error = e;
            return (None, ConfigError::one("<file>", e.message()).issues);
        }
    };
    let mut issues = Vec::new();
    unknown_keys(&table, "", &known_keys(), &mut issues);
    for issue in &issues {
        remove_key(&mut table, &issue.field);
    }
    match PipelineConfig::deserialize(table) {
        Ok(c) => (Some(c), issues),
        Err(e) => {
            issues.push(ConfigIssue {
                field: "<file>".into(),
                message: e.to_string().trim().to_string(),
            });
            (None, issues)
        }
    }
}

fn remove_key(table: &mut toml::Table, dotted: &str) {
    match dotted.split_once('.') {
        None => {
            table.remove(dotted);
        }
        Some((head, rest)) => {
            if let Some(toml::Value::Table(inner)) = table.get_mut(head) {
                remove_key(inner, rest);
            }
        }
    }
}

fn creatable_dir(path: &Path) -> Result<(), String> {
    if path.as_os_str().is_empty() {
        return Err("empty path".into());
    }
    let mut cur = Some(path);
    while let Some(p) = cur {
        if p.exists() {
            return if p.is_dir() {
                Ok(())
            } else {
                Err(format!("{} exists and is not a directory", p.display()))
            };
        }
        cur = p.parent().filter(|q| !q.as_os_str().is_empty());
    }
    Ok(())
}

/// Reads, parses and checks a config file. Relative paths inside it are
/// taken relative to the file's directory.
pub fn validate_config(file: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| ConfigError::one("<file>", format!("cannot read {}: {e}", file.display())))?;
    let (config, mut issues) = parse_collect(&text);
    let config = config.map(|mut c| {
        c.rebase(file.parent().unwrap_or(Path::new(".")));
        issues.extend(c.issues());
        c
    });
    match config {
        Some(c) if issues.is_empty() => Ok(c),
        _ => Err(ConfigError { issues }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_round_trips() {
        let c = PipelineConfig::from_toml_str("out_dir = \"results\"\n").unwrap();
        assert_eq!(c.out_dir, PathBuf::from("results"));
        assert_eq!(c.max_workers, 4);
        let again = PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn optional_fields_round_trip() {
        let mut c = PipelineConfig::default();
        c.citations_dir = Some("lists".into());
        c.thresholds.guideline_split = Some(("tripod".into(), "tripod_ai".into()));
        c.http.allowed_hosts = Some(vec!["127.0.0.1".into()]);
        c.compile.budget_tokens = Some(100_000);
        c.backend.kind = BackendKind::Chat;
        c.backend.model = Some("m".into());
        let again = PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let err = PipelineConfig::from_toml_str("colour = 1\n[rate_limits]\ngithub = 1.0\ngitbucket = 2.0\n").unwrap_err();
        assert_eq!(err.fields(), BTreeSet::from(["colour", "rate_limits.gitbucket"]));
    }

    #[test]
    fn negative_rate_limit_is_named() {
        let c = PipelineConfig::from_toml_str("[rate_limits]\ngithub = -1.0\n").unwrap();
        let err = c.validate().unwrap_err();
        assert_eq!(err.fields(), BTreeSet::from(["rate_limits.github"]));
    }

    #[test]
    fn several_issues_reported_together() {
        let c = PipelineConfig::from_toml_str(
            "max_workers = 0\n[backend]\nkind = \"scripted\"\n[rate_limits]\noa = 0.0\n",
        )
        .unwrap();
        let err = c.validate().unwrap_err();
        assert_eq!(
            err.fields(),
            BTreeSet::from(["max_workers", "backend.script", "rate_limits.oa"])
        );
    }

    #[test]
    fn unknown_and_semantic_issues_reported_together() {
        let tmp = tempfile::tempdir().unwrap();
        let f = tmp.path().join("c.toml");
        std::fs::write(&f, "max_workers = 0\nextra = true\n[rate_limits]\nosf = -2.0\n").unwrap();
        let err = validate_config(&f).unwrap_err();
        assert_eq!(err.fields(), BTreeSet::from(["extra", "max_workers", "rate_limits.osf"]));
    }

    #[test]
    fn wrong_type_is_rejected() {
        assert!(PipelineConfig::from_toml_str("max_workers = \"four\"\n").is_err());
    }

    #[test]
    fn out_dir_under_a_file_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let f = tmp.path().join("plain");
        std::fs::write(&f, "x").unwrap();
        let c = PipelineConfig {
            out_dir: f.join("sub"),
            cache_dir: tmp.path().join("cache"),
            ..Default::default()
        };
        assert_eq!(c.validate().unwrap_err().fields(), BTreeSet::from(["out_dir"]));
    }
}
