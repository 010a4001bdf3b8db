//! Article screening: structured verdicts from an assessor backend,
//! validated against the screening schema, and the code-sharing status
//! derived from them.

mod country;
mod sharing;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::backend::{AssessorBackend, BackendError};
use crate::prompts::{paper_assessment_schema, CODE_STATEMENT_LOCATIONS, SCREENING_PROMPT};

pub use country::{iso_names, normalize_country, CountryMatch, NOT_REPORTED};
pub use sharing::{
    determine_sharing_status, ArticleDisposition, DispositionCounts, FetchOutcome, LinkOutcome,
    SharingError, SharingStatus,
};

pub const APPENDIX: &str = "Appendix";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementLocation {
    Abstract,
    Introduction,
    Methods,
    Results,
    Discussion,
    DataAvailabilitySection,
    CodeAvailabilitySection,
    SupplementaryMaterial,
    Other,
}

impl StatementLocation {
    pub const ALL: [StatementLocation; 9] = [
        StatementLocation::Abstract,
        StatementLocation::Introduction,
        StatementLocation::Methods,
        StatementLocation::Results,
        StatementLocation::Discussion,
        StatementLocation::DataAvailabilitySection,
        StatementLocation::CodeAvailabilitySection,
        StatementLocation::SupplementaryMaterial,
        StatementLocation::Other,
    ];

    pub fn as_str(self) -> &'static str {
        CODE_STATEMENT_LOCATIONS[self as usize]
    }

    pub fn parse(s: &str) -> Option<Self> {
        CODE_STATEMENT_LOCATIONS
            .iter()
            .position(|l| *l == s)
            .map(|i| Self::ALL[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperAssessment {
    pub is_match: bool,
    pub reason: String,
    pub country_first_author_institution: String,
    pub repo_url: Option<String>,
    pub code_statement_locations: Option<Vec<StatementLocation>>,
    pub code_statement_sentence: Option<String>,
}

impl PaperAssessment {
    pub fn is_appendix(&self) -> bool {
        self.repo_url.as_deref() == Some(APPENDIX)
    }

    /// Repository URL proper, i.e. present and not the appendix sentinel.
    pub fn link(&self) -> Option<&str> {
        self.repo_url.as_deref().filter(|u| *u != APPENDIX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    NotAnObject,
    MissingField,
    WrongType,
    UnknownLocation,
    ConditionalPresence,
    LocationsWithoutUrl,
    SentenceWithoutUrl,
    SentenceContainsUrl,
    EmptyUrl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub field: String,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let rule = match self.rule {
            Rule::NotAnObject => "not an object",
            Rule::MissingField => "missing field",
            Rule::WrongType => "wrong type",
            Rule::UnknownLocation => "unknown location",
            Rule::ConditionalPresence => "conditional presence",
            Rule::LocationsWithoutUrl => "locations without repo_url",
            Rule::SentenceWithoutUrl => "sentence without repo_url",
            Rule::SentenceContainsUrl => "sentence contains url",
            Rule::EmptyUrl => "empty repo_url",
        };
        write!(f, "{rule}: {}: {}", self.field, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} violation(s): {}", violations.len(), violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationFailure {
    pub violations: Vec<Violation>,
}

impl ValidationFailure {
    pub fn rules(&self) -> std::collections::BTreeSet<Rule> {
        self.violations.iter().map(|v| v.rule).collect()
    }
}

fn present(obj: &Map<String, Value>, key: &str) -> bool {
    obj.get(key).is_some_and(|v| !v.is_null())
}

/// Type, enum and conditional-presence checks on raw backend output.
///
/// Extra keys are ignored. Locations are deduplicated in order, the appendix
/// sentinel is matched case-insensitively and the country is normalized
/// (unrecognized names are kept verbatim; see [`normalize_country`]).
pub fn validate_assessment(raw: &Value) -> Result<PaperAssessment, ValidationFailure> {
    let mut violations = Vec::new();
    let mut violate = |rule, field: &str, detail: String| {
        violations.push(Violation {
            rule,
            field: field.to_string(),
            detail,
        })
    };
    let Some(obj) = raw.as_object() else {
        violate(Rule::NotAnObject, "", format!("got {}", type_name(raw)));
        return Err(ValidationFailure { violations });
    };
    for f in crate::prompts::PAPER_FIELDS {
        if !obj.contains_key(f) {
            violate(Rule::MissingField, f, "required".into());
        }
    }

    let is_match = match obj.get("is_match") {
        Some(Value::Bool(b)) => Some(*b),
        Some(v) => {
            violate(Rule::WrongType, "is_match", format!("expected boolean, got {}", type_name(v)));
            None
        }
        None => None,
    };
    let mut string_field = |name: &str, nullable: bool| -> Option<String> {
        match obj.get(name) {
            Some(Value::String(s)) => Some(s.clone()),
            Some(Value::Null) if nullable => None,
            Some(v) => {
                violate(
                    Rule::WrongType,
                    name,
                    format!("expected {}string, got {}", if nullable { "nullable " } else { "" }, type_name(v)),
                );
                None
            }
            None => None,
        }
    };
    let reason = string_field("reason", false);
    let country = string_field("country_first_author_institution", false);
    let repo_url = string_field("repo_url", true);
    let sentence = string_field("code_statement_sentence", true);

    let mut locations: Option<Vec<StatementLocation>> = None;
    match obj.get("code_statement_locations") {
        Some(Value::Array(items)) => {
            let mut out = Vec::new();
            for item in items {
                match item {
                    Value::String(s) => match StatementLocation::parse(s) {
                        Some(l) => {
                            if !out.contains(&l) {
                                out.push(l);
                            }
                        }
                        None => violate(Rule::UnknownLocation, "code_statement_locations", format!("`{s}`")),
                    },
                    other => violate(
                        Rule::WrongType,
                        "code_statement_locations",
                        format!("expected string item, got {}", type_name(other)),
                    ),
                }
            }
            locations = Some(out);
        }
        Some(Value::Null) | None => {}
        Some(v) => violate(
            Rule::WrongType,
            "code_statement_locations",
            format!("expected nullable array, got {}", type_name(v)),
        ),
    }

    let url_present = present(obj, "repo_url");
    if is_match == Some(false) {
        for f in ["repo_url", "code_statement_locations", "code_statement_sentence"] {
            if present(obj, f) {
                violate(Rule::ConditionalPresence, f, "present with is_match=false".into());
            }
        }
    }
    if !url_present {
        if present(obj, "code_statement_locations") {
            violate(Rule::LocationsWithoutUrl, "code_statement_locations", "present without repo_url".into());
        }
        if present(obj, "code_statement_sentence") {
            violate(Rule::SentenceWithoutUrl, "code_statement_sentence", "present without repo_url".into());
        }
    }
    let repo_url = repo_url.map(|u| {
        if u.trim().eq_ignore_ascii_case(APPENDIX) {
            APPENDIX.to_string()
        } else {
            u
        }
    });
    if let Some(u) = &repo_url {
        if u.trim().is_empty() {
            violate(Rule::EmptyUrl, "repo_url", "blank".into());
        } else if u != APPENDIX {
            if let Some(s) = &sentence {
                if s.contains(u.trim()) {
                    violate(Rule::SentenceContainsUrl, "code_statement_sentence", format!("contains `{}`", u.trim()));
                }
            }
        }
    }

    if !violations.is_empty() {
        return Err(ValidationFailure { violations });
    }
    let country = country.expect("validated");
    Ok(PaperAssessment {
        is_match: is_match.expect("validated"),
        reason: reason.expect("validated"),
        country_first_author_institution: normalize_country(&country).value().to_string(),
        repo_url: repo_url.map(|u| if u == APPENDIX { u } else { u.trim().to_string() }),
        code_statement_locations: locations,
        code_statement_sentence: sentence,
    })
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScreenError {
    #[error("screening text is empty")]
    EmptyText,
    #[error("backend failed: {0}")]
    Backend(BackendError),
}

impl ScreenError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ScreenError::Backend(e) if e.is_retryable())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ScreenOutcome {
    Assessed {
        assessment: PaperAssessment,
        warnings: Vec<String>,
        raw_outputs: Vec<Value>,
        attempts: u32,
    },
    AssessmentFailed {
        reason: String,
        raw_outputs: Vec<Value>,
    },
}

impl ScreenOutcome {
    pub fn raw_outputs(&self) -> &[Value] {
        match self {
            ScreenOutcome::Assessed { raw_outputs, .. }
            | ScreenOutcome::AssessmentFailed { raw_outputs, .. } => raw_outputs,
        }
    }
}

pub const MAX_REASKS: u32 = 2;

pub fn reask_prompt(base: &str, problems: &[String]) -> String {
    let mut p = base.to_string();
    p.push_str("\n\nYour previous response did not satisfy the output schema:\n");
    for problem in problems {
        p.push_str("- ");
        p.push_str(problem);
        p.push('\n');
    }
    p.push_str("Return a corrected response.");
    p
}

/// Screens one article. The first request carries the screening prompt
/// verbatim; each of up to [`MAX_REASKS`] re-asks appends the violations.
pub fn screen_article(text: &str, backend: &dyn AssessorBackend) -> Result<ScreenOutcome, ScreenError> {
    if text.trim().is_empty() {
        return Err(ScreenError::EmptyText);
    }
    let schema = paper_assessment_schema();
    let mut prompt = SCREENING_PROMPT.to_string();
    let mut raw_outputs = Vec::new();
    let mut last_problems = Vec::new();
    for attempt in 0..=MAX_REASKS {
        if attempt > 0 {
            prompt = reask_prompt(SCREENING_PROMPT, &last_problems);
        }
        let problems = match backend.invoke(&prompt, text, &schema) {
            Ok(raw) => {
                let verdict = validate_assessment(&raw);
                raw_outputs.push(raw.clone());
                match verdict {
                    Ok(assessment) => {
                        let mut warnings = Vec::new();
                        if let Some(country) = raw.get("country_first_author_institution").and_then(Value::as_str) {
                            match normalize_country(country) {
                                CountryMatch::Unrecognized(c) => {
                                    warnings.push(format!("unrecognized country `{c}` kept verbatim"))
                                }
                                CountryMatch::Alias { from, to } => {
                                    warnings.push(format!("country `{from}` normalized to `{to}`"))
                                }
                                _ => {}
                            }
                        }
                        return Ok(ScreenOutcome::Assessed {
                            assessment,
                            warnings,
                            raw_outputs,
                            attempts: attempt + 1,
                        });
                    }
                    Err(f) => f.violations.iter().map(|v| v.to_string()).collect(),
                }
            }
            Err(BackendError::Unparseable(msg)) => {
                raw_outputs.push(Value::String(msg.clone()));
                vec![format!("output was not valid JSON: {msg}")]
            }
            Err(e) => return Err(ScreenError::Backend(e)),
        };
        tracing::debug!(attempt, ?problems, "screening output rejected");
        last_problems = problems;
    }
    Ok(ScreenOutcome::AssessmentFailed {
        reason: format!(
            "invalid output after {} re-asks: {}",
            MAX_REASKS,
            last_problems.join("; ")
        ),
        raw_outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use serde_json::json;

    fn valid_match() -> Value {
        json!({
            "is_match": true,
            "reason": "develops a Cox model",
            "country_first_author_institution": "France",
            "repo_url": "https://github.com/u/r",
            "code_statement_locations": ["data_availability_section"],
            "code_statement_sentence": "Code is available at"
        })
    }

    #[test]
    fn all_absent_conditionals_are_valid() {
        let raw = json!({"is_match": false, "reason": "review article",
            "country_first_author_institution": "France", "repo_url": null,
            "code_statement_locations": null, "code_statement_sentence": null});
        let a = validate_assessment(&raw).unwrap();
        assert!(!a.is_match);
        assert_eq!(a.repo_url, None);
    }

    #[test]
    fn locations_without_url_fail() {
        let mut raw = valid_match();
        raw["repo_url"] = Value::Null;
        raw["code_statement_sentence"] = Value::Null;
        raw["code_statement_locations"] = json!(["methods"]);
        let f = validate_assessment(&raw).unwrap_err();
        assert_eq!(f.rules(), [Rule::LocationsWithoutUrl].into());
    }

    #[test]
    fn url_with_no_match_is_conditional_presence() {
        let mut raw = valid_match();
        raw["is_match"] = json!(false);
        let f = validate_assessment(&raw).unwrap_err();
        assert!(f.rules().contains(&Rule::ConditionalPresence));
        assert!(f.to_string().contains("conditional presence"));
    }

    #[test]
    fn unknown_location_is_named() {
        let mut raw = valid_match();
        raw["code_statement_locations"] = json!(["methods", "footnote"]);
        let f = validate_assessment(&raw).unwrap_err();
        assert!(f.to_string().contains("`footnote`"));
    }

    #[test]
    fn sentence_with_url_fails_but_appendix_passes() {
        let mut raw = valid_match();
        raw["code_statement_sentence"] = json!("See https://github.com/u/r for code");
        assert_eq!(
            validate_assessment(&raw).unwrap_err().rules(),
            [Rule::SentenceContainsUrl].into()
        );
        raw["repo_url"] = json!(" appendix ");
        raw["code_statement_sentence"] = json!("Code is provided in the Appendix");
        assert_eq!(validate_assessment(&raw).unwrap().repo_url.as_deref(), Some(APPENDIX));
    }

    #[test]
    fn locations_deduplicate_in_order() {
        let mut raw = valid_match();
        raw["code_statement_locations"] = json!(["methods", "abstract", "methods"]);
        let a = validate_assessment(&raw).unwrap();
        assert_eq!(
            a.code_statement_locations,
            Some(vec![StatementLocation::Methods, StatementLocation::Abstract])
        );
    }

    #[test]
    fn missing_keys_and_wrong_types_all_listed() {
        let raw = json!({"is_match": "yes", "reason": 3});
        let f = validate_assessment(&raw).unwrap_err();
        assert_eq!(f.violations.iter().filter(|v| v.rule == Rule::MissingField).count(), 4);
        assert_eq!(f.violations.iter().filter(|v| v.rule == Rule::WrongType).count(), 2);
        assert_eq!(validate_assessment(&json!([1])).unwrap_err().rules(), [Rule::NotAnObject].into());
    }

    #[test]
    fn country_alias_is_normalized() {
        let mut raw = valid_match();
        raw["country_first_author_institution"] = json!("USA");
        assert_eq!(
            validate_assessment(&raw).unwrap().country_first_author_institution,
            "United States"
        );
    }

    #[test]
    fn reasks_then_succeeds_with_prompt_verbatim_first() {
        let mut bad = valid_match();
        bad["code_statement_locations"] = json!(["nowhere"]);
        let backend = ScriptedBackend::new("t")
            .rule(None, ".", vec![bad, valid_match()])
            .unwrap();
        let out = screen_article("some article", &backend).unwrap();
        match out {
            ScreenOutcome::Assessed { attempts, raw_outputs, .. } => {
                assert_eq!(attempts, 2);
                assert_eq!(raw_outputs.len(), 2);
            }
            other => panic!("{other:?}"),
        }
        let prompts = backend.prompts_seen();
        assert_eq!(prompts[0], SCREENING_PROMPT);
        assert!(prompts[1].starts_with(SCREENING_PROMPT));
        assert!(prompts[1].contains("`nowhere`"));
    }

    #[test]
    fn hard_fails_after_two_reasks() {
        let backend = ScriptedBackend::new("t").rule(None, ".", vec![json!({})]).unwrap();
        match screen_article("x", &backend).unwrap() {
            ScreenOutcome::AssessmentFailed { raw_outputs, reason } => {
                assert_eq!(raw_outputs.len(), 3);
                assert!(reason.contains("missing field"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_text_is_precondition_error() {
        let backend = ScriptedBackend::new("t");
        assert_eq!(screen_article("  \n", &backend), Err(ScreenError::EmptyText));
    }

    struct Down;
    impl AssessorBackend for Down {
        fn identity(&self) -> String {
            "down".into()
        }
        fn invoke(&self, _: &str, _: &str, _: &crate::prompts::SchemaDescriptor) -> Result<Value, BackendError> {
            Err(BackendError::Transient("503".into()))
        }
    }

    #[test]
    fn backend_outage_is_retryable() {
        let err = screen_article("text", &Down).unwrap_err();
        assert!(err.is_retryable());
    }
}
