//! Pluggable assessors that turn (prompt, document, schema) into structured
//! output. The pipeline never depends on a particular model: anything
//! implementing [`AssessorBackend`] can screen articles or assess
//! repositories, and its raw output is always validated downstream.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use regex::Regex;
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::http::{HttpClient, RateLimiter};
use crate::prompts::{SchemaDescriptor, PAPER_SCHEMA_NAME};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    /// Worth retrying later (throttling, outage, timeout).
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Permanent(String),
    /// The backend answered but not with parseable structured output.
    #[error("unparseable backend output: {0}")]
    Unparseable(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

pub trait AssessorBackend: Send + Sync {
    /// Name and version of the backend, recorded in provenance.
    fn identity(&self) -> String;

    fn invoke(
        &self,
        prompt: &str,
        document: &str,
        schema: &SchemaDescriptor,
    ) -> Result<Value, BackendError>;
}

impl<T: AssessorBackend + ?Sized> AssessorBackend for Arc<T> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn invoke(&self, prompt: &str, document: &str, schema: &SchemaDescriptor) -> Result<Value, BackendError> {
        (**self).invoke(prompt, document, schema)
    }
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid script: {0}")]
    Invalid(String),
    #[error("invalid pattern `{pattern}`: {message}")]
    Pattern { pattern: String, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    name: String,
    #[serde(default)]
    rules: Vec<RuleFile>,
    #[serde(default)]
    fallback: BTreeMap<String, Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    #[serde(default)]
    schema: Option<String>,
    document_matches: String,
    #[serde(default)]
    prompt_matches: Option<String>,
    responses: Vec<Value>,
}

struct ScriptRule {
    schema: Option<String>,
    document: Regex,
    prompt: Option<Regex>,
    responses: Vec<Value>,
}

/// Deterministic backend answering from a script of regex rules.
///
/// The first rule whose schema, document pattern and optional prompt
/// pattern all match supplies the answer. A rule with several responses
/// plays them in order on successive matches and then repeats the last one,
/// which is how re-ask behaviour is scripted.
pub struct ScriptedBackend {
    name: String,
    rules: Vec<ScriptRule>,
    fallback: BTreeMap<String, Value>,
    hits: Mutex<Vec<usize>>,
    calls: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            rules: Vec::new(),
            fallback: BTreeMap::new(),
            hits: Mutex::new(Vec::new()),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn rule(
        mut self,
        schema: Option<&str>,
        document_pattern: &str,
        responses: Vec<Value>,
    ) -> Result<Self, ScriptError> {
        self.push_rule(schema.map(str::to_string), document_pattern, None, responses)?;
        Ok(self)
    }

    pub fn fallback(mut self, schema: &str, response: Value) -> Self {
        self.fallback.insert(schema.to_string(), response);
        self
    }

    fn push_rule(
        &mut self,
        schema: Option<String>,
        document: &str,
        prompt: Option<&str>,
        responses: Vec<Value>,
    ) -> Result<(), ScriptError> {
        if responses.is_empty() {
            return Err(ScriptError::Invalid(format!(
                "rule `{document}` has no responses"
            )));
        }
        let compile = |p: &str| {
            Regex::new(p).map_err(|e| ScriptError::Pattern {
                pattern: p.to_string(),
                message: e.to_string(),
            })
        };
        self.rules.push(ScriptRule {
            schema,
            document: compile(document)?,
            prompt: prompt.map(compile).transpose()?,
            responses,
        });
        self.hits.lock().unwrap().push(0);
        Ok(())
    }

    /// Loads a JSON script: `{"name", "rules": [{"schema", "document_matches",
    /// "prompt_matches", "responses"}], "fallback": {schema: response}}`.
    pub fn from_json_str(text: &str) -> Result<Self, ScriptError> {
        let file: ScriptFile =
            serde_json::from_str(text).map_err(|e| ScriptError::Invalid(e.to_string()))?;
        let mut backend = Self::new(file.name);
        for r in file.rules {
            backend.push_rule(r.schema, &r.document_matches, r.prompt_matches.as_deref(), r.responses)?;
        }
        backend.fallback = file.fallback;
        Ok(backend)
    }

    pub fn from_path(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScriptError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text)
    }

    /// Prompts received so far, in call order.
    pub fn prompts_seen(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }
}

impl AssessorBackend for ScriptedBackend {
    fn identity(&self) -> String {
        format!("scripted:{}", self.name)
    }

    fn invoke(&self, prompt: &str, document: &str, schema: &SchemaDescriptor) -> Result<Value, BackendError> {
        self.calls.lock().unwrap().push(prompt.to_string());
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.schema.as_deref().is_some_and(|s| s != schema.name) {
                continue;
            }
            if !rule.document.is_match(document) {
                continue;
            }
            if rule.prompt.as_ref().is_some_and(|p| !p.is_match(prompt)) {
                continue;
            }
            let mut hits = self.hits.lock().unwrap();
            let n = hits[i];
            hits[i] += 1;
            let idx = n.min(rule.responses.len() - 1);
            return Ok(rule.responses[idx].clone());
        }
        self.fallback
            .get(schema.name)
            .cloned()
            .ok_or_else(|| BackendError::Permanent(format!("no scripted response for schema {}", schema.name)))
    }
}

/// Keyword heuristics for article screening, usable offline. It answers
/// only the paper schema.
pub struct KeywordScreener {
    model_terms: Regex,
    exclusion_terms: Regex,
    url: Regex,
    appendix_code: Regex,
}

impl Default for KeywordScreener {
    fn default() -> Self {
        Self {
            model_terms: Regex::new(
                r"(?i)\b(prediction model|predictive model|prognostic model|risk score|nomogram|cox (proportional hazards )?regression|logistic regression|machine learning|random forest|gradient boosting|neural network|deep learning)\b",
            )
            .unwrap(),
            exclusion_terms: Regex::new(
                r"(?i)\b(study protocol|protocol for a|systematic review|scoping review|meta-analysis)\b",
            )
            .unwrap(),
            url: Regex::new(
                r#"(?i)\b(?:https?://)?(?:www\.)?(?:github\.com|gitlab\.com|gitee\.com|zenodo\.org|figshare\.com|osf\.io|doi\.org|bitbucket\.org)/[^\s)\]>"']+"#,
            )
            .unwrap(),
            appendix_code: Regex::new(
                r"(?i)\b(code|scripts?)\b[^.]{0,80}\b(supplementary|supplemental|appendix)\b|\b(supplementary|supplemental|appendix)\b[^.]{0,80}\b(code|scripts?)\b",
            )
            .unwrap(),
        }
    }
}

fn heading_location(heading: &str) -> &'static str {
    let h = heading.to_ascii_lowercase();
    if h.contains("code availab") {
        "code_availability_section"
    } else if h.contains("data availab") || h.contains("availability of data") || h.contains("data sharing") {
        "data_availability_section"
    } else if h.contains("abstract") {
        "abstract"
    } else if h.contains("introduction") || h.contains("background") {
        "introduction"
    } else if h.contains("method") || h.contains("material") {
        "methods"
    } else if h.contains("result") {
        "results"
    } else if h.contains("discussion") || h.contains("conclusion") {
        "discussion"
    } else if h.contains("supplement") {
        "supplementary_material"
    } else {
        "other"
    }
}

impl KeywordScreener {
    fn screen(&self, document: &str) -> Value {
        let matched = self.model_terms.is_match(document) && !self.exclusion_terms.is_match(document);
        if !matched {
            return json!({
                "is_match": false,
                "reason": "no multivariable prediction model development, update or validation described",
                "country_first_author_institution": "not reported",
                "repo_url": null,
                "code_statement_locations": null,
                "code_statement_sentence": null,
            });
        }
        let mut heading = "";
        let mut locations: Vec<&str> = Vec::new();
        let mut found: Option<(String, String)> = None;
        for line in document.lines() {
            if let Some(h) = line.strip_prefix('#') {
                heading = h.trim_start_matches('#').trim();
                continue;
            }
            if let Some(m) = self.url.find(line) {
                let loc = heading_location(heading);
                if !locations.contains(&loc) {
                    locations.push(loc);
                }
                if found.is_none() {
                    let url = m.as_str().trim_end_matches(['.', ',', ';', ':']).to_string();
                    let sentence = sentence_around(line, m.start())
                        .replace(m.as_str(), "")
                        .trim()
                        .to_string();
                    found = Some((url, sentence));
                }
            }
        }
        let (repo_url, sentence) = match found {
            Some((u, s)) => (Some(u), Some(s)),
            None if self.appendix_code.is_match(document) => {
                locations = vec!["supplementary_material"];
                (Some("Appendix".to_string()), None)
            }
            None => (None, None),
        };
        let locations = repo_url.as_ref().map(|_| locations);
        json!({
            "is_match": true,
            "reason": "describes a multivariable prediction model",
            "country_first_author_institution": "not reported",
            "repo_url": repo_url,
            "code_statement_locations": locations,
            "code_statement_sentence": sentence,
        })
    }
}

fn sentence_around(line: &str, at: usize) -> String {
    let start = line[..at]
        .rfind(". ")
        .map(|i| i + 2)
        .unwrap_or(0);
    let end = line[at..]
        .find(". ")
        .map(|i| at + i + 1)
        .unwrap_or(line.len());
    line[start..end].to_string()
}

impl AssessorBackend for KeywordScreener {
    fn identity(&self) -> String {
        "keyword-screener/1".to_string()
    }

    fn invoke(&self, _prompt: &str, document: &str, schema: &SchemaDescriptor) -> Result<Value, BackendError> {
        if schema.name != PAPER_SCHEMA_NAME {
            return Err(BackendError::Permanent(format!(
                "keyword screener cannot produce {}",
                schema.name
            )));
        }
        Ok(self.screen(document))
    }
}

/// Chat-completions backend for any OpenAI-compatible endpoint, using
/// JSON-schema constrained output.
pub struct ChatCompletionsBackend {
    client: Arc<HttpClient>,
    base_url: String,
    model: String,
    api_key: Option<String>,
    limiter: Option<Arc<RateLimiter>>,
}

impl ChatCompletionsBackend {
    pub fn new(
        client: Arc<HttpClient>,
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        limiter: Option<Arc<RateLimiter>>,
    ) -> Self {
        Self {
            client,
            base_url: base_url.into(),
            model: model.into(),
            api_key,
            limiter,
        }
    }

    fn request_body(&self, prompt: &str, document: &str, schema: &SchemaDescriptor) -> Value {
        json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt},
                {"role": "user", "content": document},
            ],
            "response_format": {
                "type": "json_schema",
                "json_schema": {
                    "name": schema.name,
                    "description": schema.description,
                    "schema": schema.schema,
                },
            },
        })
    }
}

impl AssessorBackend for ChatCompletionsBackend {
    fn identity(&self) -> String {
        format!("chat-completions:{}", self.model)
    }

    fn invoke(&self, prompt: &str, document: &str, schema: &SchemaDescriptor) -> Result<Value, BackendError> {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let mut headers = Vec::new();
        if let Some(key) = &self.api_key {
            headers.push(("Authorization".to_string(), format!("Bearer {key}")));
        }
        let body = self.request_body(prompt, document, schema).to_string();
        let resp = self
            .client
            .post_json(&url, &headers, &body)
            .map_err(|e| {
                if e.is_transient() {
                    BackendError::Transient(e.to_string())
                } else {
                    BackendError::Permanent(e.to_string())
                }
            })?;
        if resp.status == 429 || resp.status >= 500 {
            return Err(BackendError::Transient(format!("HTTP {}", resp.status)));
        }
        if !resp.is_success() {
            return Err(BackendError::Permanent(format!("HTTP {}: {}", resp.status, resp.text())));
        }
        let envelope: Value = serde_json::from_slice(&resp.body)
            .map_err(|e| BackendError::Unparseable(format!("envelope: {e}")))?;
        let content = envelope["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| BackendError::Unparseable("missing choices[0].message.content".into()))?;
        serde_json::from_str(content).map_err(|e| BackendError::Unparseable(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::{paper_assessment_schema, repo_assessment_schema};

    #[test]
    fn scripted_rules_play_in_sequence() {
        let b = ScriptedBackend::new("t")
            .rule(Some("PaperAssessment"), "Cox", vec![json!({"n": 1}), json!({"n": 2})])
            .unwrap();
        let s = paper_assessment_schema();
        assert_eq!(b.invoke("p", "a Cox model", &s).unwrap()["n"], 1);
        assert_eq!(b.invoke("p", "a Cox model", &s).unwrap()["n"], 2);
        assert_eq!(b.invoke("p", "a Cox model", &s).unwrap()["n"], 2);
        assert!(b.invoke("p", "nothing", &s).is_err());
        assert!(b.invoke("p", "a Cox model", &repo_assessment_schema()).is_err());
    }

    #[test]
    fn script_file_round_trip() {
        let b = ScriptedBackend::from_json_str(
            r#"{"name": "fx", "rules": [{"document_matches": "x", "responses": [{"a": 1}]}],
                "fallback": {"RepoAssessment": {"b": 2}}}"#,
        )
        .unwrap();
        assert_eq!(b.identity(), "scripted:fx");
        assert_eq!(b.invoke("", "zzz", &repo_assessment_schema()).unwrap()["b"], 2);
        assert!(ScriptedBackend::from_json_str(r#"{"name": "x", "bogus": 1}"#).is_err());
    }

    #[test]
    fn keyword_screener_finds_link_and_location() {
        let doc = "## Methods\nWe developed a Cox regression prediction model.\n\n## Data availability\nThe code is available at https://github.com/a/b.\n";
        let v = KeywordScreener::default()
            .invoke("", doc, &paper_assessment_schema())
            .unwrap();
        assert_eq!(v["is_match"], true);
        assert_eq!(v["repo_url"], "https://github.com/a/b");
        assert_eq!(v["code_statement_locations"], json!(["data_availability_section"]));
        assert_eq!(v["code_statement_sentence"], "The code is available at");
    }

    #[test]
    fn keyword_screener_rejects_protocols() {
        let doc = "## Abstract\nThis study protocol describes a prediction model to be built.";
        let v = KeywordScreener::default()
            .invoke("", doc, &paper_assessment_schema())
            .unwrap();
        assert_eq!(v["is_match"], false);
        assert!(v["repo_url"].is_null());
    }
}
