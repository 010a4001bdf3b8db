//! Resumable stage runner. Each stage reads its predecessors' line files
//! under `out_dir` and appends one record per unit to its own.

pub mod config;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use config::{
    validate_config, Annotations, BackendConfig, BackendKind, CompileConfig, ConfigError, ConfigIssue, Endpoints,
    HttpConfig, PipelineConfig, RateLimits, StageToggles, Tables,
};

use crate::assess::{
    assess_with_backend, detect_static_features, merge_assessments, AssessError, Detectors, FeatureProvenance,
    RepoAssessment, RepoViolation,
};
use crate::backend::{AssessorBackend, ChatCompletionsBackend, KeywordScreener, ScriptedBackend};
use crate::compile::{compile_within_budget, persist_compiled, root_stem, CompiledRepo, DirSource, Inclusion};
use crate::evalmet::{
    binary_feature_report, classification_report, field_labels, link_retrieval_accuracy, render_table,
    AnnotationSet, EvalError, LabelTable, LinkAccuracy, MetricReport, Unit,
};
use crate::fetch::{fetch_repository, has_source_code, Clock, FetchStatus, KindRules, RepoFetcher, RepoSnapshot};
use crate::http::{HttpClient, HttpOptions, RateLimiter, RetryPolicy};
use crate::ingest::{
    aggregate_citations, fetch_fulltext, load_citation_lists, read_manifest, write_manifest, ArticleRecord,
    FulltextFetcher, OaStatus,
};
use crate::linkres::{resolve_link, DoiError, DoiResolver, LinkError, Provider, Resolution, ResolvedRepoLink};
use crate::report::{cohort_stats, write_reports, ArticleRow, ReportError, RepoRow};
use crate::screen::{
    determine_sharing_status, normalize_country, screen_article, ArticleDisposition, CountryMatch,
    DispositionCounts, FetchOutcome, LinkOutcome, ScreenOutcome,
};
use crate::store::{self, JsonlWriter, StoreError};

pub const MANIFEST: &str = "manifest.jsonl";
pub const INGEST_WARNINGS: &str = "ingest_warnings.jsonl";
pub const ARTICLES: &str = "articles.jsonl";
pub const SCREENING: &str = "screening.jsonl";
pub const LINKS: &str = "links.jsonl";
pub const SNAPSHOTS: &str = "snapshots.jsonl";
pub const COMPILED: &str = "compiled.jsonl";
pub const ASSESSMENTS: &str = "repo_assessments.jsonl";
pub const DISPOSITIONS: &str = "dispositions.jsonl";

/// Boolean repository features scored against annotations, with table labels.
pub const EVAL_REPO_FEATURES: [(&str, &str); 13] = [
    ("contains_readme", "Contains README"),
    ("readme_purpose_and_outputs", "README purpose and outputs"),
    ("contains_requirements", "Contains Requirements"),
    ("requirements_dependency_versions", "Requirements dependency versions"),
    ("contains_license", "Contains license"),
    ("sufficient_code_documentation", "Sufficient Code Documentation"),
    ("is_modular_and_structured", "Is modular and structured"),
    ("implements_tests", "Implements tests"),
    ("fixes_seed_if_stochastic", "Fixes seed if stochastic"),
    ("lists_hardware_requirements", "Lists hardware requirements"),
    ("contains_link_to_paper", "Contains link to paper"),
    ("contains_citation", "Contains citation"),
    ("includes_data_or_sample", "Includes data or sample data"),
];

pub const SCOPE_CLASSES: [(&str, &str); 2] = [("false", "Out of scope"), ("true", "In scope")];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Screen,
    Resolve,
    Fetch,
    Compile,
    Assess,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Screen,
        Stage::Resolve,
        Stage::Fetch,
        Stage::Compile,
        Stage::Assess,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Screen => "screen",
            Stage::Resolve => "resolve",
            Stage::Fetch => "fetch",
            Stage::Compile => "compile",
            Stage::Assess => "assess",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    pub fn enabled(self, t: &StageToggles) -> bool {
        match self {
            Stage::Ingest => t.ingest,
            Stage::Screen => t.screen,
            Stage::Resolve => t.resolve,
            Stage::Fetch => t.fetch,
            Stage::Compile => t.compile,
            Stage::Assess => t.assess,
            Stage::Evaluate => t.evaluate,
            Stage::Report => t.report,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// One line of a stage output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord<T> {
    pub key: String,
    #[serde(flatten)]
    pub result: UnitResult<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum UnitResult<T> {
    Ok { value: T },
    Failed { reason: String },
}

impl<T> UnitRecord<T> {
    pub fn value(&self) -> Option<&T> {
        match &self.result {
            UnitResult::Ok { value } => Some(value),
            UnitResult::Failed { .. } => None,
        }
    }
}

#[derive(Deserialize)]
struct KeyOnly {
    key: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Option<Stage>,
    pub processed: usize,
    pub skipped: usize,
    /// Units recorded as failed in this run.
    pub failed: usize,
    /// Units left without output after a transient failure; a rerun
    /// retries them.
    pub deferred: usize,
    pub outcomes: BTreeMap<String, usize>,
    pub outputs: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl StageSummary {
    fn new(stage: Stage) -> Self {
        Self {
            stage: Some(stage),
            ..Default::default()
        }
    }

    pub fn hard_failures(&self) -> usize {
        self.failed + self.deferred
    }

    fn count(&mut self, key: &str) {
        *self.outcomes.entry(key.to_string()).or_default() += 1;
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{} is missing: run the `{required}` stage first", .path.display())]
    MissingPredecessor { required: Stage, path: PathBuf },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("backend: {0}")]
    Backend(String),
    #[error("pattern tables: {0}")]
    Tables(String),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Work result for one unit.
pub enum UnitOutcome<T> {
    Done(T),
    Failed(String),
    /// Transient; nothing is recorded.
    Retry(String),
}

/// Compiled repository reference stored in `compiled.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledEntry {
    pub canonical_root: String,
    /// Paths relative to `out_dir`.
    pub text_path: String,
    pub document_path: String,
    pub total_tokens: usize,
    pub fallback_mode: bool,
    pub sections: usize,
    pub truncated: usize,
    pub excluded: usize,
}

/// Line of `repo_assessments.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessedRepo {
    pub canonical_root: String,
    pub assessment: RepoAssessment,
    /// Sidecar path relative to `out_dir`.
    pub provenance_path: String,
    pub backend: Option<String>,
    pub fallback_mode: bool,
}

/// Provenance sidecar for one repository.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub canonical_root: String,
    pub provenance: FeatureProvenance,
    /// Why the backend answer was not used, when it was not.
    pub backend_note: Option<String>,
    pub backend_raw_outputs: Vec<Value>,
    pub violations: Vec<RepoViolation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditOutcome {
    Complete,
    LinkUnresolved,
    UnsupportedProvider,
    FetchFailed,
    NotAssessed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub url: String,
    pub outcome: AuditOutcome,
    pub link: ResolvedRepoLink,
    pub snapshot: Option<RepoSnapshot>,
    pub compiled: Option<CompiledEntry>,
    pub assessment: Option<RepoAssessment>,
    pub provenance: Option<ProvenanceRecord>,
    pub detail: Option<String>,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    clock: Clock,
    paper_backend: Option<Arc<dyn AssessorBackend>>,
    repo_backend: Option<Arc<dyn AssessorBackend>>,
    detectors: Detectors,
    kind_rules: KindRules,
    force: bool,
}

fn load_backend(config: &PipelineConfig) -> Result<Option<Arc<dyn AssessorBackend>>, PipelineError> {
    let b = &config.backend;
    Ok(match b.kind {
        BackendKind::None => None,
        BackendKind::Keyword => Some(Arc::new(KeywordScreener::default())),
        BackendKind::Scripted => {
            let path = b.script.as_deref().ok_or_else(|| PipelineError::Backend("no script configured".into()))?;
            Some(Arc::new(
                ScriptedBackend::from_path(path).map_err(|e| PipelineError::Backend(e.to_string()))?,
            ))
        }
        BackendKind::Chat => {
            let key = b.api_key_env.as_deref().and_then(|v| std::env::var(v).ok());
            Some(Arc::new(ChatCompletionsBackend::new(
                Arc::new(http_client(config)),
                b.endpoint.clone().unwrap_or_default(),
                b.model.clone().unwrap_or_default(),
                key,
                Some(Arc::new(RateLimiter::per_second(config.rate_limits.backend))),
            )))
        }
    })
}

fn http_client(config: &PipelineConfig) -> HttpClient {
    HttpClient::new(HttpOptions {
        user_agent: config.http.user_agent.clone(),
        timeout: Duration::from_secs_f64(config.http.timeout_secs),
        allowed_hosts: config.http.allowed_hosts.clone(),
        ..HttpOptions::default()
    })
}

fn read_table(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::Tables(format!("{}: {e}", path.display())))
}

impl Pipeline {
    /// Validates the configuration and loads backend and pattern tables.
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let detectors = match &config.tables.detectors {
            Some(p) => Detectors::from_toml(&read_table(p)?).map_err(|e| PipelineError::Tables(e.to_string()))?,
            None => Detectors::default(),
        };
        let kind_rules = match &config.tables.kinds {
            Some(p) => KindRules::from_toml(&read_table(p)?).map_err(|e| PipelineError::Tables(e.to_string()))?,
            None => KindRules::default(),
        };
        let paper_backend = load_backend(&config)?;
        let repo_backend = paper_backend
            .clone()
            .filter(|_| config.backend.assess_repositories && config.backend.kind != BackendKind::Keyword);
        Ok(Self {
            config,
            clock: Arc::new(chrono::Utc::now),
            paper_backend,
            repo_backend,
            detectors,
            kind_rules,
            force: false,
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Replaces the configured backend for screening and, when enabled,
    /// repository assessment.
    pub fn with_backend(mut self, backend: Arc<dyn AssessorBackend>) -> Self {
        self.repo_backend = Some(backend.clone()).filter(|_| self.config.backend.assess_repositories);
        self.paper_backend = Some(backend);
        self
    }

    /// Recompute `evaluate` and `report` outputs even when present.
    pub fn with_force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.config.out_dir)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.config.http.retry_attempts,
            base_delay: Duration::from_millis(self.config.http.retry_base_delay_ms),
            ..RetryPolicy::default()
        }
    }

    fn require<T: DeserializeOwned>(&self, name: &str, required: Stage) -> Result<Vec<UnitRecord<T>>, PipelineError> {
        let path = self.out(name);
        if !path.exists() {
            return Err(PipelineError::MissingPredecessor { required, path });
        }
        Ok(store::read_jsonl(&path)?)
    }

    fn optional<T: DeserializeOwned>(&self, name: &str) -> Result<Option<Vec<UnitRecord<T>>>, PipelineError> {
        let path = self.out(name);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(store::read_jsonl(&path)?))
    }

    /// Runs `work` over units lacking a record in `file`, at most
    /// `max_workers` at a time, appending results in unit order.
    fn process_units<U, T, F>(
        &self,
        summary: &mut StageSummary,
        file: &str,
        units: Vec<(String, U)>,
        work: F,
    ) -> Result<(), PipelineError>
    where
        U: Sync,
        T: Serialize + Send,
        F: Fn(&str, &U) -> UnitOutcome<T> + Sync,
    {
        let path = self.out(file);
        let done: HashSet<String> = store::read_jsonl::<KeyOnly>(&path)?.into_iter().map(|k| k.key).collect();
        let mut seen = HashSet::new();
        let mut todo = Vec::new();
        for (key, unit) in units {
            if !seen.insert(key.clone()) {
                continue;
            }
            if done.contains(&key) {
                summary.skipped += 1;
            } else {
                todo.push((key, unit));
            }
        }
        let mut writer = JsonlWriter::open(&path)?;
        summary.outputs.push(path);
        let stage = summary.stage.map(Stage::as_str).unwrap_or_default();
        for batch in todo.chunks(self.config.max_workers.max(1)) {
            let results: Vec<UnitOutcome<T>> = std::thread::scope(|s| {
                let handles: Vec<_> = batch.iter().map(|(k, u)| s.spawn(|| work(k, u))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| UnitOutcome::Failed("worker panicked".into())))
                    .collect()
            });
            for ((key, _), result) in batch.iter().zip(results) {
                match result {
                    UnitOutcome::Done(value) => {
                        writer.append(&UnitRecord {
                            key: key.clone(),
                            result: UnitResult::Ok { value },
                        })?;
                        summary.processed += 1;
                    }
                    UnitOutcome::Failed(reason) => {
                        tracing::warn!(stage, unit = %key, %reason, "unit failed");
                        writer.append(&UnitRecord::<T> {
                            key: key.clone(),
                            result: UnitResult::Failed { reason },
                        })?;
                        summary.processed += 1;
                        summary.failed += 1;
                    }
                    UnitOutcome::Retry(reason) => {
                        tracing::warn!(stage, unit = %key, %reason, "transient failure, left for a later run");
                        summary.deferred += 1;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageSummary, PipelineError> {
        let mut s = StageSummary::new(stage);
        match stage {
            Stage::Ingest => self.ingest(&mut s)?,
            Stage::Screen => self.screen(&mut s)?,
            Stage::Resolve => self.resolve(&mut s)?,
            Stage::Fetch => self.fetch(&mut s)?,
            Stage::Compile => self.compile(&mut s)?,
            Stage::Assess => self.assess(&mut s)?,
            Stage::Evaluate => self.evaluate(&mut s)?,
            Stage::Report => self.report(&mut s)?,
        }
        tracing::info!(
            stage = stage.as_str(),
            processed = s.processed,
            skipped = s.skipped,
            failed = s.failed,
            deferred = s.deferred,
            "stage finished"
        );
        Ok(s)
    }

    /// Every enabled stage in order, stopping at the first stage error.
    pub fn run_all(&self) -> Result<Vec<StageSummary>, PipelineError> {
        Stage::ALL
            .into_iter()
            .filter(|s| s.enabled(&self.config.stages))
            .map(|s| self.run_stage(s))
            .collect()
    }

    fn ingest(&self, s: &mut StageSummary) -> Result<(), PipelineError> {
        let out = &self.config.out_dir;
        let manifest = if out.join(MANIFEST).exists() {
            read_manifest(out)?
        } else {
            let dir = self
                .config
                .citations_dir
                .as_ref()
                .ok_or_else(|| ConfigError::one("citations_dir", "required by the ingest stage"))?;
            let lists = load_citation_lists(dir)?;
            let (m, warnings) = aggregate_citations(&lists, (self.clock)());
            write_manifest(out, &m)?;
            let mut lines = Vec::new();
            for w in &warnings {
                lines.extend(serde_json::to_vec(w).map_err(StoreError::from)?);
                lines.push(b'\n');
            }
            store::write_atomic(&out.join(INGEST_WARNINGS), &lines)?;
            m
        };
        s.outcomes.insert("total_raw".into(), manifest.counts.total_raw);
        s.outcomes.insert("duplicates_removed".into(), manifest.counts.duplicates_removed);
        s.outcomes.insert("unique".into(), manifest.counts.unique);

        let fetcher = FulltextFetcher::new(
            http_client(&self.config),
            self.config.endpoints.oa(),
            &self.config.cache_dir,
        )
        .with_limiter(RateLimiter::per_second(self.config.rate_limits.oa))
        .with_retry(self.retry());
        let units = manifest.records.iter().map(|r| (r.article_id.clone(), r.clone())).collect();
        self.process_units(s, ARTICLES, units, |_, r: &ArticleRecord| match fetch_fulltext(r, &fetcher) {
            Ok(rec) => UnitOutcome::Done(rec),
            Err(e) if e.is_retryable() => UnitOutcome::Retry(e.to_string()),
            Err(e) => UnitOutcome::Failed(e.to_string()),
        })?;
        for r in store::read_jsonl::<UnitRecord<ArticleRecord>>(&self.out(ARTICLES))? {
            s.count(match r.value().map(|a| a.oa_status) {
                Some(OaStatus::Retrieved) => "retrieved",
                Some(_) => "not_retrievable",
                None => "failed",
            });
        }
        Ok(())
    }

    fn screen(&self, s: &mut StageSummary) -> Result<(), PipelineError> {
        let articles: Vec<UnitRecord<ArticleRecord>> = self.require(ARTICLES, Stage::Ingest)?;
        let backend = self
            .paper_backend
            .clone()
            .ok_or_else(|| PipelineError::Backend("screening needs a backend; backend.kind is none".into()))?;
        let units = articles
            .into_iter()
            .filter_map(|r| {
                let a = r.value()?;
                (a.oa_status == OaStatus::Retrieved).then(|| (r.key.clone(), a.clone()))
            })
            .collect();
        self.process_units(s, SCREENING, units, |_, a: &ArticleRecord| {
            let Some(text) = a.screening_text.as_deref() else {
                return UnitOutcome::Failed("no screening text".into());
            };
            match screen_article(text, &*backend) {
                Ok(o) => UnitOutcome::Done(o),
                Err(e) if e.is_retryable() => UnitOutcome::Retry(e.to_string()),
                Err(e) => UnitOutcome::Failed(e.to_string()),
            }
        })?;
        for r in store::read_jsonl::<UnitRecord<ScreenOutcome>>(&self.out(SCREENING))? {
            s.count(match r.value() {
                Some(ScreenOutcome::Assessed { assessment, .. }) if assessment.is_match => "in_scope",
                Some(ScreenOutcome::Assessed { .. }) => "out_of_scope",
                Some(ScreenOutcome::AssessmentFailed { .. }) => "assessment_failed",
                None => "failed",
            });
        }
        Ok(())
    }

    fn resolve(&self, s: &mut StageSummary) -> Result<(), PipelineError> {
        let screening: Vec<UnitRecord<ScreenOutcome>> = self.require(SCREENING, Stage::Screen)?;
        let units: Vec<(String, ())> = screening
            .iter()
            .filter_map(|r| match r.value()? {
                ScreenOutcome::Assessed { assessment, .. } if assessment.is_match => {
                    assessment.link().map(|l| (l.to_string(), ()))
                }
                _ => None,
            })
            .collect();
        let resolver = DoiResolver::new(http_client(&self.config), self.config.endpoints.doi_resolver.clone())
            .with_limiter(RateLimiter::per_second(self.config.rate_limits.doi))
            .with_retry(self.retry())
            .with_cache_file(&self.config.cache_dir.join("doi").join("resolved.jsonl"))?;
        self.process_units(s, LINKS, units, |raw, _| match resolve_link(raw, Some(&resolver)) {
            Ok(l) => UnitOutcome::Done(l),
            Err(LinkError::Doi(e @ DoiError::Transient { .. })) => UnitOutcome::Retry(e.to_string()),
            Err(e) => UnitOutcome::Failed(e.to_string()),
        })?;
        for r in store::read_jsonl::<UnitRecord<ResolvedRepoLink>>(&self.out(LINKS))? {
            match r.value() {
                Some(l) => s.count(&resolution_name(l.resolution)),
                None => s.count("failed"),
            }
        }
        Ok(())
    }

    fn repo_fetcher(&self) -> RepoFetcher {
        let rl = &self.config.rate_limits;
        let mut f = RepoFetcher::new(
            http_client(&self.config),
            self.config.endpoints.providers.clone(),
            &self.config.cache_dir,
        )
        .with_rules(self.kind_rules.clone())
        .with_retry(self.retry())
        .with_clock(self.clock.clone());
        for (p, rate) in [
            (Provider::Github, rl.github),
            (Provider::Gitlab, rl.gitlab),
            (Provider::Gitee, rl.gitee),
            (Provider::Zenodo, rl.zenodo),
            (Provider::Figshare, rl.figshare),
            (Provider::Osf, rl.osf),
        ] {
            f = f.with_limiter(p, RateLimiter::per_second(rate));
        }
        f
    }

    fn fetch(&self, s: &mut StageSummary) -> Result<(), PipelineError> {
        let links: Vec<UnitRecord<ResolvedRepoLink>> = self.require(LINKS, Stage::Resolve)?;
        let units = links
            .iter()
            .filter_map(|r| {
                let l = r.value()?;
                let root = l.canonical_root.clone().filter(|_| l.resolution == Resolution::Ok)?;
                Some((root, l.clone()))
            })
            .collect();
        let fetcher = self.repo_fetcher();
        self.process_units(s, SNAPSHOTS, units, |_, l: &ResolvedRepoLink| match fetch_repository(l, &fetcher) {
            Ok(snap) => UnitOutcome::Done(snap),
            Err(e) => UnitOutcome::Failed(e.to_string()),
        })?;
        let snaps = snapshot_map(store::read_jsonl(&self.out(SNAPSHOTS))?);
        for r in &links {
            let Some(l) = r.value() else {
                s.count("unresolved");
                continue;
            };
            match l.resolution {
                Resolution::UnsupportedProvider => s.count("unsupported"),
                Resolution::Ok => match l.canonical_root.as_ref().and_then(|k| snaps.get(k)) {
                    Some(Some(snap)) if snap.fetch_status == FetchStatus::Ok => {
                        s.count("ok");
                        s.count(if has_source_code(snap) { "ok_with_source" } else { "ok_source_free" });
                    }
                    Some(_) => s.count("unresolved"),
                    None => s.count("not_fetched"),
                },
                _ => s.count("unresolved"),
            }
        }
        Ok(())
    }

    fn compile(&self, s: &mut StageSummary) -> Result<(), PipelineError> {
        let snaps: Vec<UnitRecord<RepoSnapshot>> = self.require(SNAPSHOTS, Stage::Fetch)?;
        let units = snaps
            .into_iter()
            .filter_map(|r| {
                let snap = r.value()?;
                (snap.fetch_status == FetchStatus::Ok).then(|| (r.key.clone(), snap.clone()))
            })
            .collect();
        let dir = self.out("compiled");
        self.process_units(s, COMPILED, units, |_, snap: &RepoSnapshot| match self.compile_one(snap, &dir) {
            Ok(e) => UnitOutcome::Done(e),
            Err(e) => UnitOutcome::Failed(e),
        })?;
        for r in store::read_jsonl::<UnitRecord<CompiledEntry>>(&self.out(COMPILED))? {
            s.count(match r.value() {
                Some(e) if e.fallback_mode => "fallback_mode",
                Some(_) => "compiled",
                None => "failed",
            });
        }
        Ok(())
    }

    fn compile_one(&self, snap: &RepoSnapshot, dir: &Path) -> Result<CompiledEntry, String> {
        let content = snap
            .content_dir
            .clone()
            .ok_or_else(|| "snapshot has no content directory".to_string())?;
        let c = compile_within_budget(snap, &DirSource(content), self.config.compile.budget_tokens)
            .map_err(|e| e.to_string())?;
        let text_path = persist_compiled(dir, &c).map_err(|e| e.to_string())?;
        let doc = dir.join(format!("{}.compiled.json", root_stem(&c.canonical_root)));
        store::write_json(&doc, &c).map_err(|e| e.to_string())?;
        Ok(CompiledEntry {
            canonical_root: c.canonical_root.clone(),
            text_path: self.rel(&text_path),
            document_path: self.rel(&doc),
            total_tokens: c.total_tokens,
            fallback_mode: c.fallback_mode,
            sections: c.sections.len(),
            truncated: c.sections.iter().filter(|x| x.inclusion == Inclusion::Truncated).count(),
            excluded: c.sections.iter().filter(|x| x.inclusion == Inclusion::Excluded).count(),
        })
    }

    /// Static detection, optional backend pass and merge for one
    /// repository. Writes the provenance sidecar under `prov_dir`.
    fn assess_one(
        &self,
        snap: &RepoSnapshot,
        compiled: &CompiledRepo,
        prov_dir: &Path,
    ) -> UnitOutcome<(AssessedRepo, ProvenanceRecord)> {
        let Some(content) = snap.content_dir.clone() else {
            return UnitOutcome::Failed("snapshot has no content directory".into());
        };
        let st = detect_static_features(snap, &DirSource(content), &self.detectors);
        let mut note = None;
        let mut raw = Vec::new();
        let mut backend_answer = None;
        if let Some(b) = &self.repo_backend {
            match assess_with_backend(compiled, &**b) {
                Ok(ba) => {
                    raw = ba.raw_outputs.clone();
                    backend_answer = Some(ba);
                }
                Err(AssessError::Backend(e)) if e.is_retryable() => return UnitOutcome::Retry(e.to_string()),
                Err(AssessError::Backend(e)) => note = Some(e.to_string()),
                Err(AssessError::BackendAssessmentFailed { reason, raw_outputs }) => {
                    note = Some(format!("backend_assessment_failed: {reason}"));
                    raw = raw_outputs;
                }
            }
        }
        let root = snap.canonical_root.clone();
        let sidecar = prov_dir.join(format!("{}.json", root_stem(&root)));
        let (result, record) = match merge_assessments(&st, backend_answer.as_ref()) {
            Ok((assessment, mut provenance)) => {
                provenance.fallback_mode |= compiled.fallback_mode;
                let record = ProvenanceRecord {
                    canonical_root: root.clone(),
                    provenance: provenance.clone(),
                    backend_note: note,
                    backend_raw_outputs: raw,
                    violations: Vec::new(),
                };
                let repo = AssessedRepo {
                    canonical_root: root.clone(),
                    assessment,
                    provenance_path: self.rel(&sidecar),
                    backend: provenance.backend.clone(),
                    fallback_mode: provenance.fallback_mode,
                };
                (Ok(repo), record)
            }
            Err(e) => {
                let record = ProvenanceRecord {
                    canonical_root: root.clone(),
                    provenance: e.provenance.clone(),
                    backend_note: note,
                    backend_raw_outputs: raw,
                    violations: e.violations.clone(),
                };
                (Err(e.to_string()), record)
            }
        };
        if let Err(e) = store::write_json(&sidecar, &record) {
            return UnitOutcome::Failed(e.to_string());
        }
        match result {
            Ok(repo) => UnitOutcome::Done((repo, record)),
            Err(reason) => UnitOutcome::Failed(reason),
        }
    }

    fn assess(&self, s: &mut StageSummary) -> Result<(), PipelineError> {
        let compiled: Vec<UnitRecord<CompiledEntry>> = self.require(COMPILED, Stage::Compile)?;
        let snaps = snapshot_map(self.require(SNAPSHOTS, Stage::Fetch)?);
        let units = compiled
            .into_iter()
            .filter_map(|r| r.value().cloned().map(|e| (r.key.clone(), e)))
            .collect();
        let prov_dir = self.out("provenance");
        self.process_units(s, ASSESSMENTS, units, |key, entry: &CompiledEntry| {
            let Some(Some(snap)) = snaps.get(key) else {
                return UnitOutcome::Failed("no snapshot for compiled repository".into());
            };
            let doc: CompiledRepo = match store::read_json(&self.out(&entry.document_path)) {
                Ok(d) => d,
                Err(e) => return UnitOutcome::Failed(e.to_string()),
            };
            match self.assess_one(snap, &doc, &prov_dir) {
                UnitOutcome::Done((repo, _)) => UnitOutcome::Done(repo),
                UnitOutcome::Failed(r) => UnitOutcome::Failed(r),
                UnitOutcome::Retry(r) => UnitOutcome::Retry(r),
            }
        })?;
        for r in store::read_jsonl::<UnitRecord<AssessedRepo>>(&self.out(ASSESSMENTS))? {
            match r.value() {
                Some(a) => {
                    s.count(if a.backend.is_some() { "with_backend" } else { "static_only" });
                    if a.assessment.is_empty {
                        s.count("empty");
                    }
                }
                None => s.count("failed"),
            }
        }
        Ok(())
    }

    fn evaluate(&self, s: &mut StageSummary) -> Result<(), PipelineError> {
        let ann = &self.config.annotations;
        if ann.articles.is_none() && ann.repositories.is_none() {
            return Err(ConfigError::one("annotations", "the evaluate stage needs at least one annotation file").into());
        }
        let dir = self.out("evaluation");
        if let Some(gold_path) = &ann.articles {
            let json = dir.join("articles.json");
            if json.exists() && !self.force {
                s.skipped += 1;
            } else {
                let screening: Vec<UnitRecord<ScreenOutcome>> = self.require(SCREENING, Stage::Screen)?;
                let gold = AnnotationSet::from_jsonl(gold_path, Unit::Article)?;
                let (report, links) = evaluate_articles(&article_predictions(&screening), &gold)?;
                store::write_json(&json, &report)?;
                store::write_atomic(&dir.join("articles.txt"), render_table(&report).as_bytes())?;
                if let Some(l) = links {
                    store::write_json(&dir.join("link_accuracy.json"), &l)?;
                }
                s.processed += 1;
            }
            s.outputs.push(json);
        }
        if let Some(gold_path) = &ann.repositories {
            let json = dir.join("repositories.json");
            if json.exists() && !self.force {
                s.skipped += 1;
            } else {
                let repos: Vec<UnitRecord<AssessedRepo>> = self.require(ASSESSMENTS, Stage::Assess)?;
                let gold = AnnotationSet::from_jsonl(gold_path, Unit::Repository)?;
                let report = binary_feature_report(&repo_predictions(&repos), &gold, &EVAL_REPO_FEATURES)?;
                store::write_json(&json, &report)?;
                store::write_atomic(&dir.join("repositories.txt"), render_table(&report).as_bytes())?;
                s.processed += 1;
            }
            s.outputs.push(json);
        }
        Ok(())
    }

    fn report(&self, s: &mut StageSummary) -> Result<(), PipelineError> {
        let manifest_path = self.out("reports").join("plot_manifest.json");
        if manifest_path.exists() && !self.force {
            s.skipped = 1;
            s.outputs.push(manifest_path);
            return Ok(());
        }
        let articles: Vec<UnitRecord<ArticleRecord>> = self.require(ARTICLES, Stage::Ingest)?;
        let screening: Vec<UnitRecord<ScreenOutcome>> = self.require(SCREENING, Stage::Screen)?;
        let links: Option<Vec<UnitRecord<ResolvedRepoLink>>> = self.optional(LINKS)?;
        let snaps: Option<Vec<UnitRecord<RepoSnapshot>>> = self.optional(SNAPSHOTS)?;
        let repos: Option<Vec<UnitRecord<AssessedRepo>>> = self.optional(ASSESSMENTS)?;
        let ids: Vec<String> = if self.out(MANIFEST).exists() {
            read_manifest(&self.config.out_dir)?
                .records
                .into_iter()
                .map(|r| r.article_id)
                .collect()
        } else {
            articles.iter().map(|r| r.key.clone()).collect()
        };
        let cohort = Cohort {
            articles: articles.iter().map(|r| (r.key.clone(), r.value().cloned())).collect(),
            screening: screening.iter().map(|r| (r.key.clone(), r.value().cloned())).collect(),
            links: links.map(|v| v.into_iter().map(|r| (r.key.clone(), r.value().cloned())).collect()),
            snapshots: snaps.map(snapshot_map),
        };
        let built = build_report_rows(&ids, &cohort)?;
        let counts = DispositionCounts::tally(built.dispositions.iter().map(|(_, d)| d));
        let mut lines = Vec::new();
        for (id, d) in &built.dispositions {
            lines.extend(
                serde_json::to_vec(&serde_json::json!({"article_id": id, "disposition": d})).map_err(StoreError::from)?,
            );
            lines.push(b'\n');
        }
        store::write_atomic(&self.out(DISPOSITIONS), &lines)?;

        let mut repo_rows = Vec::new();
        match repos {
            None => s.notes.push(format!("{ASSESSMENTS} absent; repository tables are empty")),
            Some(repos) => {
                for r in repos {
                    let Some(a) = r.value() else { continue };
                    if let Some((year, journal)) = built.repo_citers.get(&a.canonical_root) {
                        repo_rows.push(RepoRow {
                            canonical_root: a.canonical_root.clone(),
                            year: *year,
                            journal: journal.clone(),
                            assessment: a.assessment.clone(),
                        });
                    }
                }
            }
        }
        let stats = cohort_stats(&built.rows, &repo_rows, Some(counts.clone()), &self.config.thresholds);
        let written = write_reports(&self.config.out_dir, &stats, &self.config.thresholds)?;
        s.processed = 1;
        s.outcomes.insert("articles".into(), counts.total);
        s.outcomes.insert("eligible".into(), counts.eligible);
        s.outcomes.insert("sharing".into(), counts.sharing);
        s.outcomes.insert("repositories".into(), repo_rows.len());
        s.outputs.push(self.out(DISPOSITIONS));
        s.outputs.extend(written);
        Ok(())
    }

    /// resolve, fetch, compile and assess for one URL, outside the corpus
    /// files. Results land in `<out>/audit/`.
    pub fn audit(&self, url: &str) -> Result<AuditReport, PipelineError> {
        let dir = self.out("audit");
        let resolver = DoiResolver::new(http_client(&self.config), self.config.endpoints.doi_resolver.clone())
            .with_limiter(RateLimiter::per_second(self.config.rate_limits.doi))
            .with_retry(self.retry());
        let link = resolve_link(url, Some(&resolver)).map_err(|e| PipelineError::Backend(e.to_string()))?;
        let mut report = AuditReport {
            url: url.to_string(),
            outcome: AuditOutcome::LinkUnresolved,
            link: link.clone(),
            snapshot: None,
            compiled: None,
            assessment: None,
            provenance: None,
            detail: None,
        };
        let finish = |report: AuditReport| -> Result<AuditReport, PipelineError> {
            let stem = report
                .link
                .canonical_root
                .as_deref()
                .map(root_stem)
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| "unresolved".into());
            store::write_json(&dir.join(format!("{stem}.audit.json")), &report)?;
            Ok(report)
        };
        match link.resolution {
            Resolution::Ok => {}
            Resolution::UnsupportedProvider => {
                report.outcome = AuditOutcome::UnsupportedProvider;
                return finish(report);
            }
            other => {
                report.detail = Some(resolution_name(other));
                return finish(report);
            }
        }
        let snap = fetch_repository(&link, &self.repo_fetcher()).map_err(|e| PipelineError::Backend(e.to_string()))?;
        report.snapshot = Some(snap.clone());
        if snap.fetch_status != FetchStatus::Ok {
            report.outcome = AuditOutcome::FetchFailed;
            report.detail = snap.detail.clone();
            return finish(report);
        }
        let compiled_dir = dir.join("compiled");
        let entry = match self.compile_one(&snap, &compiled_dir) {
            Ok(e) => e,
            Err(e) => {
                report.outcome = AuditOutcome::NotAssessed;
                report.detail = Some(e);
                return finish(report);
            }
        };
        let doc: CompiledRepo = store::read_json(&self.out(&entry.document_path))?;
        report.compiled = Some(entry);
        match self.assess_one(&snap, &doc, &dir.join("provenance")) {
            UnitOutcome::Done((repo, record)) => {
                report.outcome = AuditOutcome::Complete;
                report.assessment = Some(repo.assessment);
                report.provenance = Some(record);
            }
            UnitOutcome::Failed(r) | UnitOutcome::Retry(r) => {
                report.outcome = AuditOutcome::NotAssessed;
                report.detail = Some(r);
            }
        }
        finish(report)
    }
}

/// Builds a pipeline from `config` and runs one stage.
pub fn run_stage(stage: Stage, config: &PipelineConfig) -> Result<StageSummary, PipelineError> {
    Pipeline::new(config.clone())?.run_stage(stage)
}

fn resolution_name(r: Resolution) -> String {
    serde_json::to_value(r)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Root to snapshot; `None` for a recorded fetch failure.
fn snapshot_map(records: Vec<UnitRecord<RepoSnapshot>>) -> BTreeMap<String, Option<RepoSnapshot>> {
    records.into_iter().map(|r| (r.key.clone(), r.value().cloned())).collect()
}

/// Screening results as a label table. Articles whose screening failed
/// appear with no labels, so they score as misses.
pub fn article_predictions(screening: &[UnitRecord<ScreenOutcome>]) -> LabelTable {
    screening
        .iter()
        .map(|r| {
            let map = match r.value() {
                Some(ScreenOutcome::Assessed { assessment, .. }) => match serde_json::to_value(assessment) {
                    Ok(Value::Object(m)) => m,
                    _ => Map::new(),
                },
                _ => Map::new(),
            };
            (r.key.clone(), map)
        })
        .collect()
}

pub fn repo_predictions(repos: &[UnitRecord<AssessedRepo>]) -> LabelTable {
    repos
        .iter()
        .filter_map(|r| {
            let a = r.value()?;
            match serde_json::to_value(&a.assessment) {
                Ok(Value::Object(m)) => Some((r.key.clone(), m)),
                _ => None,
            }
        })
        .collect()
}

/// Scope classification report with link retrieval accuracy in `extra`.
/// Articles annotated but never screened score as misses.
pub fn evaluate_articles(
    pred: &LabelTable,
    gold: &AnnotationSet,
) -> Result<(MetricReport, Option<LinkAccuracy>), EvalError> {
    let mut pred: LabelTable = pred.clone();
    for id in gold.records.keys() {
        pred.entry(id.clone()).or_default();
    }
    let aligned: LabelTable = gold.records.keys().map(|k| (k.clone(), pred[k].clone())).collect();
    let mut report = classification_report(
        &field_labels(&aligned, "is_match"),
        &field_labels(&gold.records, "is_match"),
        &SCOPE_CLASSES,
    )?;
    let links = match link_retrieval_accuracy(
        &field_labels(&aligned, "repo_url"),
        &field_labels(&gold.records, "repo_url"),
        None,
    ) {
        Ok(l) => {
            report.extra.insert("link_retrieval_accuracy".into(), l.accuracy);
            Some(l)
        }
        Err(EvalError::EmptyEvaluation) => {
            report.notes.push("no annotated links; link accuracy not computed".into());
            None
        }
        Err(e) => return Err(e),
    };
    Ok((report, links))
}

/// Per-article stage results, keyed by article id or link.
pub struct Cohort {
    pub articles: BTreeMap<String, Option<ArticleRecord>>,
    pub screening: BTreeMap<String, Option<ScreenOutcome>>,
    pub links: Option<BTreeMap<String, Option<ResolvedRepoLink>>>,
    pub snapshots: Option<BTreeMap<String, Option<RepoSnapshot>>>,
}

pub struct ReportRows {
    pub dispositions: Vec<(String, ArticleDisposition)>,
    pub rows: Vec<ArticleRow>,
    /// Repositories of articles classed as sharing a repository, with the
    /// first citing article's year and journal.
    pub repo_citers: BTreeMap<String, (Option<i32>, Option<String>)>,
}

fn country_name(raw: &str) -> Option<String> {
    match normalize_country(raw) {
        CountryMatch::Exact(n) | CountryMatch::Alias { to: n, .. } | CountryMatch::Unrecognized(n) => Some(n),
        CountryMatch::NotReported => None,
    }
}

/// Disposition of every article and the in-scope rows for reporting.
pub fn build_report_rows(ids: &[String], c: &Cohort) -> Result<ReportRows, PipelineError> {
    let mut out = ReportRows {
        dispositions: Vec::new(),
        rows: Vec::new(),
        repo_citers: BTreeMap::new(),
    };
    for id in ids {
        let article = c.articles.get(id).cloned().flatten();
        let Some(article) = article.filter(|a| a.oa_status == OaStatus::Retrieved) else {
            out.dispositions.push((id.clone(), ArticleDisposition::NotRetrievable));
            continue;
        };
        let assessment = match c.screening.get(id) {
            Some(Some(ScreenOutcome::Assessed { assessment, .. })) => assessment,
            Some(_) => {
                out.dispositions.push((id.clone(), ArticleDisposition::AssessmentFailed));
                continue;
            }
            None => {
                return Err(PipelineError::MissingPredecessor {
                    required: Stage::Screen,
                    path: PathBuf::from(format!("{SCREENING} entry for {id}")),
                })
            }
        };
        if !assessment.is_match {
            out.dispositions.push((id.clone(), ArticleDisposition::OutOfScope));
            continue;
        }
        let mut outcome = None;
        let mut root = None;
        if let Some(url) = assessment.link() {
            let missing = |required: Stage, what: &str| PipelineError::MissingPredecessor {
                required,
                path: PathBuf::from(format!("{what} entry for {url}")),
            };
            let links = c.links.as_ref().ok_or_else(|| missing(Stage::Resolve, LINKS))?;
            let link = links.get(url).ok_or_else(|| missing(Stage::Resolve, LINKS))?;
            outcome = Some(match link {
                None => LinkOutcome {
                    resolution: Resolution::Malformed,
                    fetch: None,
                },
                Some(l) if l.resolution == Resolution::Ok => {
                    let key = l.canonical_root.clone().unwrap_or_default();
                    let snaps = c.snapshots.as_ref().ok_or_else(|| missing(Stage::Fetch, SNAPSHOTS))?;
                    let snap = snaps.get(&key).ok_or_else(|| missing(Stage::Fetch, SNAPSHOTS))?;
                    root = Some(key);
                    LinkOutcome {
                        resolution: Resolution::Ok,
                        fetch: Some(match snap {
                            Some(s) => FetchOutcome {
                                status: s.fetch_status,
                                has_source_code: has_source_code(s),
                            },
                            None => FetchOutcome {
                                status: FetchStatus::ProviderError,
                                has_source_code: false,
                            },
                        }),
                    }
                }
                Some(l) => LinkOutcome {
                    resolution: l.resolution,
                    fetch: None,
                },
            });
        }
        let status = determine_sharing_status(assessment, outcome.as_ref())
            .map_err(|e| PipelineError::Backend(e.to_string()))?;
        out.dispositions.push((id.clone(), ArticleDisposition::Sharing(status)));
        if status == crate::screen::SharingStatus::SharesRepository {
            if let Some(r) = root {
                out.repo_citers
                    .entry(r)
                    .or_insert_with(|| (article.publication_year, article.journal.clone()));
            }
        }
        out.rows.push(ArticleRow {
            article_id: id.clone(),
            year: article.publication_year,
            journal: article.journal.clone(),
            country: country_name(&assessment.country_first_author_institution),
            source_entries: article.source_entries.clone(),
            sharing: status.is_sharing(),
            repo_url: assessment.repo_url.clone(),
            code_statement_locations: assessment
                .code_statement_locations
                .iter()
                .flatten()
                .map(|l| l.as_str().to_string())
                .collect(),
            code_statement_sentence: assessment.code_statement_sentence.clone(),
        });
    }
    Ok(out)
}

/// Ids with a record in a stage file, whatever its status.
pub fn recorded_keys(path: &Path) -> Result<BTreeSet<String>, StoreError> {
    Ok(store::read_jsonl::<KeyOnly>(path)?.into_iter().map(|k| k.key).collect())
}
