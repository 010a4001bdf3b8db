use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::detect::{Evidence, StaticFeatures};
use super::{check_conditionals, validate_repo_assessment, RepoAssessment, RepoViolation, OBJECTIVE_FIELDS};
use crate::backend::{AssessorBackend, BackendError};
use crate::compile::CompiledRepo;
use crate::prompts::{repo_assessment_schema, REPOSITORY_PROMPT, REPO_FIELDS};
use crate::screen::{reask_prompt, MAX_REASKS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    StaticDetector,
    Backend,
    /// Backend value overridden or filled in to keep the record consistent.
    Merged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldProvenance {
    pub origin: Origin,
    pub evidence: Vec<Evidence>,
    /// What the backend said, when one was consulted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend_value: Option<Value>,
    /// For static-origin fields: whether the backend agreed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corroborated: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureProvenance {
    pub fields: BTreeMap<String, FieldProvenance>,
    pub stochastic: bool,
    pub fallback_mode: bool,
    pub backend: Option<String>,
    pub contradictions: Vec<String>,
}

/// Shape-valid backend output for one compiled repository.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendAssessment {
    pub assessment: RepoAssessment,
    pub backend: String,
    pub raw_outputs: Vec<Value>,
    pub attempts: usize,
    pub fallback_mode: bool,
}

#[derive(Debug, Error)]
pub enum AssessError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("backend assessment failed: {reason}")]
    BackendAssessmentFailed { reason: String, raw_outputs: Vec<Value> },
}

#[derive(Debug, Clone, Error)]
#[error("merged assessment is inconsistent: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct MergeError {
    pub violations: Vec<RepoViolation>,
    pub provenance: FeatureProvenance,
}

/// Sends the repository prompt verbatim with the compiled text; each of up
/// to [`MAX_REASKS`] re-asks lists the schema violations of the last reply.
pub fn assess_with_backend(
    compiled: &CompiledRepo,
    backend: &dyn AssessorBackend,
) -> Result<BackendAssessment, AssessError> {
    let schema = repo_assessment_schema();
    let document = compiled.to_text();
    let mut prompt = REPOSITORY_PROMPT.to_string();
    let mut raw_outputs = Vec::new();
    let mut problems: Vec<String> = Vec::new();
    for attempt in 0..=MAX_REASKS {
        if attempt > 0 {
            prompt = reask_prompt(REPOSITORY_PROMPT, &problems);
        }
        problems = match backend.invoke(&prompt, &document, &schema) {
            Ok(raw) => {
                let verdict = validate_repo_assessment(&raw);
                raw_outputs.push(raw);
                match verdict {
                    Ok(assessment) => {
                        return Ok(BackendAssessment {
                            assessment,
                            backend: backend.identity(),
                            raw_outputs,
                            attempts: attempt as usize + 1,
                            fallback_mode: compiled.fallback_mode,
                        })
                    }
                    Err(v) => v.iter().map(ToString::to_string).collect(),
                }
            }
            Err(BackendError::Unparseable(msg)) => {
                raw_outputs.push(Value::String(msg.clone()));
                vec![format!("output was not valid JSON: {msg}")]
            }
            Err(e) => return Err(e.into()),
        };
        tracing::debug!(attempt, ?problems, root = %compiled.canonical_root, "repository output rejected");
    }
    Err(AssessError::BackendAssessmentFailed {
        reason: format!("invalid output after {MAX_REASKS} re-asks: {}", problems.join("; ")),
        raw_outputs,
    })
}

fn set_value(a: &mut RepoAssessment, field: &str, v: &Value) {
    match field {
        "comments_and_explanations" => a.comments_and_explanations = v.as_str().map(str::to_string),
        "coding_languages" => {
            a.coding_languages = v
                .as_array()
                .map(|l| l.iter().filter_map(Value::as_str).map(str::to_string).collect())
        }
        f => a.set_flag(f, v.as_bool()),
    }
}

/// Objective fields keep detector values, subjective fields take the
/// backend's when present. Conditional fields are then reconciled and the
/// four conditional rules re-checked.
pub fn merge_assessments(
    st: &StaticFeatures,
    backend: Option<&BackendAssessment>,
) -> Result<(RepoAssessment, FeatureProvenance), MergeError> {
    let s = &st.assessment;
    let mut out = s.clone();
    let mut fields = BTreeMap::new();
    let mut contradictions = Vec::new();
    for f in REPO_FIELDS {
        let evidence = st.evidence.get(f).cloned().unwrap_or_default();
        let bv = backend.map(|b| b.assessment.field_value(f));
        let objective = OBJECTIVE_FIELDS.contains(&f);
        let origin = if !objective && backend.is_some() {
            set_value(&mut out, f, bv.as_ref().unwrap_or(&Value::Null));
            Origin::Backend
        } else {
            Origin::StaticDetector
        };
        let corroborated = (objective && backend.is_some()).then(|| bv.as_ref() == Some(&s.field_value(f)));
        if corroborated == Some(false) {
            tracing::debug!(field = f, "backend disagrees with detector");
        }
        fields.insert(
            f.to_string(),
            FieldProvenance {
                origin,
                evidence,
                backend_value: bv,
                corroborated,
                note: None,
            },
        );
    }
    let mut amend = |field: &str, note: String, contradiction: bool| {
        let p = fields.get_mut(field).expect("all fields present");
        p.origin = Origin::Merged;
        if contradiction {
            contradictions.push(format!("{field}: {note}"));
        }
        p.note = Some(note);
    };

    if backend.is_some() {
        if !out.contains_readme && out.readme_purpose_and_outputs.is_some() {
            out.readme_purpose_and_outputs = None;
            amend(
                "readme_purpose_and_outputs",
                "dropped: backend set it but no README was detected".into(),
                true,
            );
        } else if out.contains_readme && out.readme_purpose_and_outputs.is_none() {
            out.readme_purpose_and_outputs = s.readme_purpose_and_outputs;
            amend(
                "readme_purpose_and_outputs",
                "backend left it empty; detector heuristic used".into(),
                false,
            );
        }
    }
    let declared = backend.is_some_and(|b| b.assessment.fixes_seed_if_stochastic.is_some());
    let stochastic = st.stochastic || declared;
    if stochastic && out.fixes_seed_if_stochastic.is_none() && backend.is_some() {
        out.fixes_seed_if_stochastic = s.fixes_seed_if_stochastic;
        amend(
            "fixes_seed_if_stochastic",
            "backend declared no stochasticity but detectors found stochastic code; detector value used".into(),
            true,
        );
    }

    let provenance = FeatureProvenance {
        fields,
        stochastic,
        fallback_mode: backend.is_some_and(|b| b.fallback_mode),
        backend: backend.map(|b| b.backend.clone()),
        contradictions,
    };
    for c in &provenance.contradictions {
        tracing::info!(contradiction = %c, "merge reconciled a conditional field");
    }
    let violations = check_conditionals(&out, Some(stochastic));
    if violations.is_empty() {
        Ok((out, provenance))
    } else {
        Err(MergeError {
            violations,
            provenance,
        })
    }
}
