//! Repository characterization against the fourteen-feature rubric.
//!
//! Objective features come from deterministic detectors over the snapshot;
//! subjective ones come from an optional backend, with detector heuristics
//! as the stand-in when no backend is configured.

mod detect;
mod merge;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use detect::{detect_static_features, DetectorConfig, Detectors, Evidence, StaticFeatures, DEFAULT_DETECTORS};
pub use merge::{
    assess_with_backend, merge_assessments, AssessError, BackendAssessment, FeatureProvenance, FieldProvenance,
    MergeError, Origin,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoAssessment {
    pub is_empty: bool,
    pub contains_readme: bool,
    pub readme_purpose_and_outputs: Option<bool>,
    pub contains_requirements: bool,
    pub requirements_dependency_versions: Option<bool>,
    pub contains_license: bool,
    pub sufficient_code_documentation: bool,
    pub is_modular_and_structured: bool,
    pub implements_tests: bool,
    pub fixes_seed_if_stochastic: Option<bool>,
    #[serde(alias = "hardware_requirements")]
    pub lists_hardware_requirements: bool,
    pub contains_link_to_paper: bool,
    pub contains_citation: bool,
    pub includes_data_or_sample: bool,
    pub comments_and_explanations: Option<String>,
    pub coding_languages: Option<Vec<String>>,
}

/// Booleans forced to false for an empty repository.
pub const CONTENT_DEPENDENT: [&str; 4] = [
    "sufficient_code_documentation",
    "is_modular_and_structured",
    "implements_tests",
    "includes_data_or_sample",
];

pub const OBJECTIVE_FIELDS: [&str; 7] = [
    "is_empty",
    "contains_readme",
    "contains_license",
    "implements_tests",
    "contains_requirements",
    "requirements_dependency_versions",
    "coding_languages",
];

pub const SUBJECTIVE_FIELDS: [&str; 9] = [
    "readme_purpose_and_outputs",
    "sufficient_code_documentation",
    "is_modular_and_structured",
    "fixes_seed_if_stochastic",
    "lists_hardware_requirements",
    "contains_link_to_paper",
    "contains_citation",
    "includes_data_or_sample",
    "comments_and_explanations",
];

const REQUIRED_BOOLS: [&str; 11] = [
    "is_empty",
    "contains_readme",
    "contains_requirements",
    "contains_license",
    "sufficient_code_documentation",
    "is_modular_and_structured",
    "implements_tests",
    "lists_hardware_requirements",
    "contains_link_to_paper",
    "contains_citation",
    "includes_data_or_sample",
];

const OPTIONAL_BOOLS: [&str; 3] = [
    "readme_purpose_and_outputs",
    "requirements_dependency_versions",
    "fixes_seed_if_stochastic",
];

impl RepoAssessment {
    /// Value of a boolean field by schema name.
    pub fn flag(&self, field: &str) -> Option<bool> {
        Some(match field {
            "is_empty" => self.is_empty,
            "contains_readme" => self.contains_readme,
            "readme_purpose_and_outputs" => return self.readme_purpose_and_outputs,
            "contains_requirements" => self.contains_requirements,
            "requirements_dependency_versions" => return self.requirements_dependency_versions,
            "contains_license" => self.contains_license,
            "sufficient_code_documentation" => self.sufficient_code_documentation,
            "is_modular_and_structured" => self.is_modular_and_structured,
            "implements_tests" => self.implements_tests,
            "fixes_seed_if_stochastic" => return self.fixes_seed_if_stochastic,
            "lists_hardware_requirements" => self.lists_hardware_requirements,
            "contains_link_to_paper" => self.contains_link_to_paper,
            "contains_citation" => self.contains_citation,
            "includes_data_or_sample" => self.includes_data_or_sample,
            _ => return None,
        })
    }

    pub(crate) fn set_flag(&mut self, field: &str, v: Option<bool>) {
        let b = v.unwrap_or(false);
        match field {
            "is_empty" => self.is_empty = b,
            "contains_readme" => self.contains_readme = b,
            "readme_purpose_and_outputs" => self.readme_purpose_and_outputs = v,
            "contains_requirements" => self.contains_requirements = b,
            "requirements_dependency_versions" => self.requirements_dependency_versions = v,
            "contains_license" => self.contains_license = b,
            "sufficient_code_documentation" => self.sufficient_code_documentation = b,
            "is_modular_and_structured" => self.is_modular_and_structured = b,
            "implements_tests" => self.implements_tests = b,
            "fixes_seed_if_stochastic" => self.fixes_seed_if_stochastic = v,
            "lists_hardware_requirements" => self.lists_hardware_requirements = b,
            "contains_link_to_paper" => self.contains_link_to_paper = b,
            "contains_citation" => self.contains_citation = b,
            "includes_data_or_sample" => self.includes_data_or_sample = b,
            other => panic!("unknown boolean field {other}"),
        }
    }

    /// JSON value of any schema field.
    pub fn field_value(&self, field: &str) -> Value {
        match field {
            "comments_and_explanations" => self
                .comments_and_explanations
                .clone()
                .map(Value::String)
                .unwrap_or(Value::Null),
            "coding_languages" => self
                .coding_languages
                .as_ref()
                .map(|l| Value::from(l.clone()))
                .unwrap_or(Value::Null),
            f => self.flag(f).map(Value::Bool).unwrap_or(Value::Null),
        }
    }
}

/// Lowercases, trims, dedupes and sorts; an empty list becomes absent.
pub fn normalize_languages(langs: impl IntoIterator<Item = impl AsRef<str>>) -> Option<Vec<String>> {
    let mut out: Vec<String> = langs
        .into_iter()
        .map(|l| l.as_ref().trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect();
    out.sort();
    out.dedup();
    (!out.is_empty()).then_some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepoRule {
    NotAnObject,
    MissingField,
    WrongType,
    /// readme_purpose_and_outputs without a README.
    ReadmeConditional,
    /// requirements_dependency_versions without requirements.
    RequirementsConditional,
    /// fixes_seed_if_stochastic present iff stochastic.
    SeedConditional,
    /// Empty repository with languages or content-dependent features.
    EmptyRepository,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoViolation {
    pub rule: RepoRule,
    pub field: String,
    pub detail: String,
}

impl fmt::Display for RepoViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.detail)
    }
}

fn violation(rule: RepoRule, field: &str, detail: impl Into<String>) -> RepoViolation {
    RepoViolation {
        rule,
        field: field.to_string(),
        detail: detail.into(),
    }
}

/// Conditional-field checks. `stochastic` is checked only when known.
pub fn check_conditionals(a: &RepoAssessment, stochastic: Option<bool>) -> Vec<RepoViolation> {
    let mut out = Vec::new();
    if !a.contains_readme && a.readme_purpose_and_outputs.is_some() {
        out.push(violation(
            RepoRule::ReadmeConditional,
            "readme_purpose_and_outputs",
            "set while contains_readme is false",
        ));
    }
    if !a.contains_requirements && a.requirements_dependency_versions.is_some() {
        out.push(violation(
            RepoRule::RequirementsConditional,
            "requirements_dependency_versions",
            "set while contains_requirements is false",
        ));
    }
    if let Some(s) = stochastic {
        if s != a.fixes_seed_if_stochastic.is_some() {
            let detail = if s {
                "absent although stochastic processes were detected"
            } else {
                "set although no stochastic process was detected"
            };
            out.push(violation(RepoRule::SeedConditional, "fixes_seed_if_stochastic", detail));
        }
    }
    if a.is_empty {
        if a.coding_languages.is_some() {
            out.push(violation(RepoRule::EmptyRepository, "coding_languages", "set for an empty repository"));
        }
        if a.fixes_seed_if_stochastic.is_some() {
            out.push(violation(
                RepoRule::EmptyRepository,
                "fixes_seed_if_stochastic",
                "set for an empty repository",
            ));
        }
        for f in CONTENT_DEPENDENT {
            if a.flag(f) == Some(true) {
                out.push(violation(RepoRule::EmptyRepository, f, "true for an empty repository"));
            }
        }
    }
    out
}

/// Checks shape and the conditional rules that hold without detector
/// context. Accepts `hardware_requirements` for `lists_hardware_requirements`.
pub fn validate_repo_assessment(raw: &Value) -> Result<RepoAssessment, Vec<RepoViolation>> {
    let Some(obj) = raw.as_object() else {
        return Err(vec![violation(RepoRule::NotAnObject, "", "output is not a JSON object")]);
    };
    let get = |k: &str| -> Option<&Value> {
        let v = obj.get(k).or_else(|| match k {
            "lists_hardware_requirements" => obj.get("hardware_requirements"),
            _ => None,
        });
        v.filter(|v| !v.is_null())
    };
    let mut problems = Vec::new();
    let mut bools = std::collections::HashMap::new();
    for f in REQUIRED_BOOLS {
        match get(f) {
            None => problems.push(violation(RepoRule::MissingField, f, "required boolean is missing")),
            Some(Value::Bool(b)) => {
                bools.insert(f, Some(*b));
            }
            Some(_) => problems.push(violation(RepoRule::WrongType, f, "expected a boolean")),
        }
    }
    for f in OPTIONAL_BOOLS {
        match get(f) {
            None => {
                bools.insert(f, None);
            }
            Some(Value::Bool(b)) => {
                bools.insert(f, Some(*b));
            }
            Some(_) => problems.push(violation(RepoRule::WrongType, f, "expected a boolean or null")),
        }
    }
    let comments = match get("comments_and_explanations") {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            problems.push(violation(
                RepoRule::WrongType,
                "comments_and_explanations",
                "expected a string or null",
            ));
            None
        }
    };
    let languages = match get("coding_languages") {
        None => None,
        Some(Value::Array(items)) if items.iter().all(Value::is_string) => {
            normalize_languages(items.iter().filter_map(Value::as_str))
        }
        Some(_) => {
            problems.push(violation(
                RepoRule::WrongType,
                "coding_languages",
                "expected a list of strings or null",
            ));
            None
        }
    };
    if !problems.is_empty() {
        return Err(problems);
    }
    let mut a = RepoAssessment {
        is_empty: false,
        contains_readme: false,
        readme_purpose_and_outputs: None,
        contains_requirements: false,
        requirements_dependency_versions: None,
        contains_license: false,
        sufficient_code_documentation: false,
        is_modular_and_structured: false,
        implements_tests: false,
        fixes_seed_if_stochastic: None,
        lists_hardware_requirements: false,
        contains_link_to_paper: false,
        contains_citation: false,
        includes_data_or_sample: false,
        comments_and_explanations: comments,
        coding_languages: languages,
    };
    for (f, v) in bools {
        a.set_flag(f, v);
    }
    let conditional = check_conditionals(&a, None);
    if conditional.is_empty() {
        Ok(a)
    } else {
        Err(conditional)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    pub(crate) fn full() -> Value {
        json!({
            "is_empty": false, "contains_readme": true, "readme_purpose_and_outputs": true,
            "contains_requirements": true, "requirements_dependency_versions": false,
            "contains_license": false, "sufficient_code_documentation": true,
            "is_modular_and_structured": false, "implements_tests": false,
            "fixes_seed_if_stochastic": null, "lists_hardware_requirements": false,
            "contains_link_to_paper": true, "contains_citation": false,
            "includes_data_or_sample": true, "comments_and_explanations": "ok",
            "coding_languages": ["R", "python", "r"]
        })
    }

    #[test]
    fn accepts_schema_output() {
        let a = validate_repo_assessment(&full()).unwrap();
        assert_eq!(a.coding_languages, Some(vec!["python".into(), "r".into()]));
        assert_eq!(a.requirements_dependency_versions, Some(false));
        assert_eq!(a.fixes_seed_if_stochastic, None);
    }

    #[test]
    fn prompt_field_name_is_accepted() {
        let mut v = full();
        let o = v.as_object_mut().unwrap();
        o.remove("lists_hardware_requirements");
        o.insert("hardware_requirements".into(), json!(true));
        assert!(validate_repo_assessment(&v).unwrap().lists_hardware_requirements);
        let ser = serde_json::to_value(validate_repo_assessment(&v).unwrap()).unwrap();
        assert_eq!(ser["lists_hardware_requirements"], json!(true));
        assert!(ser.get("hardware_requirements").is_none());
    }

    #[test]
    fn readme_conditional() {
        let mut v = full();
        v["contains_readme"] = json!(false);
        let err = validate_repo_assessment(&v).unwrap_err();
        assert_eq!(err[0].rule, RepoRule::ReadmeConditional);
        v["readme_purpose_and_outputs"] = Value::Null;
        assert!(validate_repo_assessment(&v).is_ok());
    }

    #[test]
    fn empty_repository_rules() {
        let mut v = full();
        v["is_empty"] = json!(true);
        let rules: Vec<_> = validate_repo_assessment(&v).unwrap_err().iter().map(|p| p.field.clone()).collect();
        assert_eq!(rules, vec!["coding_languages", "sufficient_code_documentation", "includes_data_or_sample"]);
    }

    #[test]
    fn shape_errors() {
        assert_eq!(validate_repo_assessment(&json!([])).unwrap_err()[0].rule, RepoRule::NotAnObject);
        let mut v = full();
        v["contains_license"] = json!("yes");
        v.as_object_mut().unwrap().remove("is_empty");
        let err = validate_repo_assessment(&v).unwrap_err();
        assert_eq!(err.len(), 2);
        assert_eq!(err[0].rule, RepoRule::MissingField);
        assert_eq!(err[1].rule, RepoRule::WrongType);
    }

    #[test]
    fn seed_rule_needs_context() {
        let a = validate_repo_assessment(&full()).unwrap();
        assert!(check_conditionals(&a, Some(false)).is_empty());
        assert_eq!(check_conditionals(&a, Some(true))[0].rule, RepoRule::SeedConditional);
    }
}
