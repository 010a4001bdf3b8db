//! Wire contract with assessor backends: the two instruction prompts and the
//! JSON schemas their structured output must follow. Field names and
//! descriptions are fixed; backends are expected to return exactly these keys.

use serde_json::{json, Value};

pub const SCREENING_PROMPT: &str = include_str!("../prompts/screening.txt");
pub const REPOSITORY_PROMPT: &str = include_str!("../prompts/repository.txt");

pub const PAPER_SCHEMA_NAME: &str = "PaperAssessment";
pub const REPO_SCHEMA_NAME: &str = "RepoAssessment";

/// Output schema handed to a backend alongside the prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaDescriptor {
    pub name: &'static str,
    pub description: &'static str,
    pub schema: Value,
}

impl SchemaDescriptor {
    pub fn field_names(&self) -> Vec<String> {
        self.schema["properties"]
            .as_object()
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default()
    }
}

pub const CODE_STATEMENT_LOCATIONS: [&str; 9] = [
    "abstract",
    "introduction",
    "methods",
    "results",
    "discussion",
    "data_availability_section",
    "code_availability_section",
    "supplementary_material",
    "other",
];

pub const PAPER_FIELDS: [&str; 6] = [
    "is_match",
    "reason",
    "country_first_author_institution",
    "repo_url",
    "code_statement_locations",
    "code_statement_sentence",
];

pub const REPO_FIELDS: [&str; 16] = [
    "is_empty",
    "contains_readme",
    "readme_purpose_and_outputs",
    "contains_requirements",
    "requirements_dependency_versions",
    "contains_license",
    "sufficient_code_documentation",
    "is_modular_and_structured",
    "implements_tests",
    "fixes_seed_if_stochastic",
    "lists_hardware_requirements",
    "contains_link_to_paper",
    "contains_citation",
    "includes_data_or_sample",
    "comments_and_explanations",
    "coding_languages",
];

fn nullable(inner: Value) -> Value {
    json!({ "anyOf": [inner, { "type": "null" }] })
}

fn with_description(mut v: Value, description: &str) -> Value {
    v["description"] = Value::String(description.to_string());
    v
}

pub fn paper_assessment_schema() -> SchemaDescriptor {
    let props = json!({
        "is_match": with_description(json!({"type": "boolean"}),
            "Whether the paper meets the inclusion criteria for a multivariable prediction model study."),
        "reason": with_description(json!({"type": "string"}),
            "Brief explanation justifying why the paper does or does not meet the criteria."),
        "country_first_author_institution": with_description(json!({"type": "string"}),
            "The country of origin based on the affiliation of the first author. Use the ISO 3166 standard name of the country in your response.Return 'not reported' if the information is not found"),
        "repo_url": with_description(nullable(json!({"type": "string"})),
            "URL to the paper's code repository if the paper is a match. Use 'Appendix' if code is explicitly stated to be in supplementary materials"),
        "code_statement_locations": with_description(
            nullable(json!({"type": "array", "items": {"type": "string", "enum": CODE_STATEMENT_LOCATIONS}})),
            "All locations in the paper where a code availability statement appears if a repo_url is found. Use ['other'] if the code availability statement location does not fit the available categories"),
        "code_statement_sentence": with_description(nullable(json!({"type": "string"})),
            "If repo_url is found, the sentence introducing the repository url (without the url itself), eg. 'The code can be found here:'"),
    });
    SchemaDescriptor {
        name: PAPER_SCHEMA_NAME,
        description: "Structured assessment of whether a paper meets inclusion criteria for multivariable prediction model studies, with justification and associated code repository information if applicable.",
        schema: json!({
            "type": "object",
            "properties": props,
            "required": PAPER_FIELDS,
        }),
    }
}

pub fn repo_assessment_schema() -> SchemaDescriptor {
    let b = |d: &str| with_description(json!({"type": "boolean"}), d);
    let ob = |d: &str| with_description(nullable(json!({"type": "boolean"})), d);
    let props = json!({
        "is_empty": b("Whether the repository is empty. Consider it empty if it contains no files, only empty files, or only a README file."),
        "contains_readme": b("Whether the repository contains usage/structure instructions (e.g., README.md/README.txt/README)."),
        "readme_purpose_and_outputs": ob("If contains_readme is True, whether the README provides an overview of the repository purpose and expected outputs. Do not return anything if contains_readme is False."),
        "contains_requirements": b("Whether the repository specifies software dependencies either in a dedicated file (e.g., requirements.txt, environment.yml, pyproject.toml) or in the README."),
        "requirements_dependency_versions": ob("If contains_requirements is True, whether dependencies include version constraints (e.g., package==1.2.3, >=, ~=). Do not return anything if contains_requirements is False."),
        "contains_license": b("Whether the repository includes a license file describing usage permissions."),
        "sufficient_code_documentation": b("Whether the code contains sufficient inline comments/docstrings explaining key components so a user can understand the logic."),
        "is_modular_and_structured": b("Whether code is organized into modular, reusable components (functions/classes/modules) rather than a few long scripts."),
        "implements_tests": b("Whether the repository includes tests (unit/functional), test files/scripts, or meaningful assertions verifying expected behavior."),
        "fixes_seed_if_stochastic": ob("If the repository uses stochastic processes (e.g., random sampling, ML training), whether it sets fixed random seeds for reproducibility. Do not return anything if stochasticity is not applicable."),
        "lists_hardware_requirements": b("Whether hardware requirements (e.g., GPU/CPU/RAM) are stated anywhere in the repository."),
        "contains_link_to_paper": b("Whether the repository includes a link (URL/DOI/arXiv/PubMed) to the associated paper."),
        "contains_citation": b("Whether the repository provides a citation for the paper (e.g., plain text citation, BibTeX entry, CITATION.cff, or a LaTeX citation key)."),
        "includes_data_or_sample": b("Whether the repository includes the original dataset or a sample/demo dataset sufficient to run or demonstrate the code."),
        "comments_and_explanations": with_description(nullable(json!({"type": "string"})),
            "Additional comments about repository quality, strengths/weaknesses, and notable aspects not fully captured by the boolean fields."),
        "coding_languages": with_description(nullable(json!({"type": "array", "items": {"type": "string"}})),
            "If the repository contains code, return all programming languages used. In a listFor example, ['python', 'r', 'sql'].Do not return anything if there is no code in the repository."),
    });
    SchemaDescriptor {
        name: REPO_SCHEMA_NAME,
        description: "Repository reproducibility characterization.",
        schema: json!({
            "type": "object",
            "properties": props,
            "required": REPO_FIELDS,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_schema_field_names_are_exact() {
        let mut got = paper_assessment_schema().field_names();
        got.sort();
        let mut want: Vec<String> = PAPER_FIELDS.iter().map(|s| s.to_string()).collect();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn repo_schema_uses_lists_hardware_requirements() {
        let names = repo_assessment_schema().field_names();
        assert_eq!(names.len(), 16);
        assert!(names.contains(&"lists_hardware_requirements".to_string()));
        assert!(!names.contains(&"hardware_requirements".to_string()));
    }

    #[test]
    fn prompts_are_carried_whole() {
        assert!(SCREENING_PROMPT.starts_with("We include a paper in our analysis"));
        assert!(SCREENING_PROMPT.contains("return 'Appendix' as the URL"));
        assert!(SCREENING_PROMPT.contains("is_match field"));
        assert!(!SCREENING_PROMPT.contains("\\_"));
        assert!(REPOSITORY_PROMPT.starts_with("You will be provided the tree of a repository"));
        assert!(REPOSITORY_PROMPT.contains("- coding_languages:"));
    }
}
