//! A small cohort served entirely from a stub server: eight cited articles,
//! a DOI that redirects to a forge, two downloadable repositories, one
//! missing repository and one unsupported host.

use std::path::{Path, PathBuf};

use repro_audit::pipeline::{BackendKind, Pipeline, PipelineConfig};
use serde_json::{json, Value};
use stub_http::Reply;
use tempfile::TempDir;

use super::{fixed_clock, jats, paper_answer, Stubs};

pub struct Scenario {
    pub stubs: Stubs,
    pub dir: TempDir,
    pub config: PipelineConfig,
}

struct Article {
    pmid: &'static str,
    journal: &'static str,
    year: i32,
    statement: &'static str,
    answer: Value,
}

fn articles() -> Vec<Article> {
    vec![
        Article {
            pmid: "1001",
            journal: "BMC Medicine",
            year: 2021,
            statement: "Code is available at https://github.com/lab/riskmodel.",
            answer: paper_answer(true, "United States", Some("https://github.com/lab/riskmodel"), Some("Code is available on GitHub.")),
        },
        Article {
            pmid: "1002",
            journal: "BMJ",
            year: 2020,
            statement: "This is a study protocol.",
            answer: paper_answer(false, "Germany", None, None),
        },
        Article {
            pmid: "1003",
            journal: "BMC Medicine",
            year: 2022,
            statement: "Software is archived at https://doi.org/10.5281/zenodo.777.",
            answer: paper_answer(true, "UK", Some("https://doi.org/10.5281/zenodo.777"), Some("Software is archived at Zenodo.")),
        },
        Article {
            pmid: "1005",
            journal: "JAMA",
            year: 2019,
            statement: "No code statement.",
            answer: paper_answer(true, "China", None, None),
        },
        Article {
            pmid: "1006",
            journal: "BMJ",
            year: 2023,
            statement: "Code: https://bitbucket.org/lab/model.",
            answer: paper_answer(true, "Canada", Some("https://bitbucket.org/lab/model"), Some("Code is on Bitbucket.")),
        },
        Article {
            pmid: "1007",
            journal: "JAMA",
            year: 2021,
            statement: "Code: https://github.com/lab/private.",
            answer: paper_answer(true, "United States", Some("https://github.com/lab/private"), Some("Code is on GitHub.")),
        },
        Article {
            pmid: "1008",
            journal: "BMC Medicine",
            year: 2020,
            statement: "The full code is listed in the supplementary appendix.",
            answer: json!({
                "is_match": true,
                "reason": "develops a clinical prediction model",
                "country_first_author_institution": "France",
                "repo_url": "Appendix",
                "code_statement_locations": ["supplementary_material"],
                "code_statement_sentence": "The full code is listed in the supplementary appendix.",
            }),
        },
    ]
}

pub fn riskmodel_answer() -> Value {
    json!({
        "is_empty": false,
        "contains_readme": true,
        "readme_purpose_and_outputs": true,
        "contains_requirements": true,
        "requirements_dependency_versions": true,
        "contains_license": true,
        "sufficient_code_documentation": true,
        "is_modular_and_structured": false,
        "implements_tests": true,
        "fixes_seed_if_stochastic": null,
        "lists_hardware_requirements": false,
        "contains_link_to_paper": false,
        "contains_citation": false,
        "includes_data_or_sample": false,
        "comments_and_explanations": "Short but clear.",
        "coding_languages": ["python"],
    })
}

const RISKMODEL: &[(&str, &[u8])] = &[
    ("README.md", b"# Risk model\nThis repository fits the risk model and produces the validation tables.\n"),
    ("requirements.txt", b"numpy==1.26.0\n"),
    ("LICENSE", b"MIT License\n"),
    ("src/model.py", b"import numpy as np\n\n# mean risk\ndef fit(x):\n    return np.mean(x)\n"),
    ("tests/test_model.py", b"from src.model import fit\n\ndef test_fit():\n    assert fit([1, 1]) == 1\n"),
];

const TOOLKIT: &[(&str, &[u8])] = &[
    ("README", b"toolkit\n"),
    ("DESCRIPTION", b"Package: toolkit\nImports: survival\n"),
    ("R/fit.R", b"fit <- function(d) survival::coxph(survival::Surv(t, e) ~ x, data = d)\n"),
];

impl Scenario {
    pub fn new() -> Self {
        let stubs = Stubs::start();
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();

        let cites = root.join("citations");
        std::fs::create_dir_all(&cites).unwrap();
        std::fs::write(cites.join("entry_a.txt"), "1001\n1002\n1003\n1004\n").unwrap();
        std::fs::write(cites.join("entry_b.txt"), "1003\n1005\n1006\nabc\n1007\n1008\n").unwrap();

        let mut rules = Vec::new();
        for a in articles() {
            let marker = format!("MARKER-{}", a.pmid);
            let body = format!(
                "<sec><title>Methods</title><p>{marker}. We developed a clinical risk prediction model.</p></sec>\
                 <sec><title>Code availability</title><p>{}</p></sec>",
                a.statement
            );
            stubs.article(a.pmid, &jats(a.pmid, &format!("Study {}", a.pmid), a.journal, a.year, &body));
            rules.push(json!({"schema": "PaperAssessment", "document_matches": marker, "responses": [a.answer]}));
        }
        stubs.server.get("/oa/1004", Reply::new(404));
        rules.push(json!({"schema": "RepoAssessment", "document_matches": "fits the risk model", "responses": [riskmodel_answer()]}));
        let script = root.join("script.json");
        std::fs::write(&script, json!({"name": "cohort", "rules": rules}).to_string()).unwrap();

        let s = &stubs.server;
        s.get("/doi/10.5281/zenodo.777", Reply::redirect(302, "/landing/zenodo-777"));
        s.get("/landing/zenodo-777", Reply::redirect(302, "https://github.com/lab/toolkit"));
        stubs.github_repo("lab", "riskmodel", RISKMODEL);
        stubs.github_repo("lab", "toolkit", TOOLKIT);
        s.get("/github/repos/lab/private", Reply::new(404));

        let ann = root.join("annotations");
        std::fs::create_dir_all(&ann).unwrap();
        let gold_articles = [
            json!({"id": "1001", "is_match": true, "repo_url": "https://github.com/lab/riskmodel"}),
            json!({"id": "1002", "is_match": false, "repo_url": null}),
            json!({"id": "1003", "is_match": true, "repo_url": "https://github.com/lab/toolkit"}),
            json!({"id": "1005", "is_match": true, "repo_url": null}),
            json!({"id": "1006", "is_match": true, "repo_url": "https://bitbucket.org/lab/model"}),
            json!({"id": "1007", "is_match": false, "repo_url": null}),
            json!({"id": "1008", "is_match": true, "repo_url": "Appendix"}),
        ];
        write_jsonl(&ann.join("articles.jsonl"), &gold_articles);
        let gold_repos = [
            json!({"canonical_root": "https://github.com/lab/riskmodel", "contains_readme": true, "contains_license": true,
                   "implements_tests": true, "contains_requirements": true, "requirements_dependency_versions": true,
                   "is_modular_and_structured": true, "sufficient_code_documentation": true}),
            json!({"canonical_root": "https://github.com/lab/toolkit", "contains_readme": true, "contains_license": false,
                   "implements_tests": false, "contains_requirements": true, "requirements_dependency_versions": false,
                   "is_modular_and_structured": false, "sufficient_code_documentation": false}),
        ];
        write_jsonl(&ann.join("repositories.jsonl"), &gold_repos);

        let mut c = PipelineConfig::default();
        c.out_dir = root.join("out");
        c.cache_dir = root.join("cache");
        c.citations_dir = Some(cites);
        c.max_workers = 3;
        c.backend.kind = BackendKind::Scripted;
        c.backend.script = Some(script);
        c.endpoints.oa_idconv = String::new();
        c.endpoints.oa_fulltext = stubs.fulltext_template();
        c.endpoints.doi_resolver = s.url("/doi");
        c.endpoints.providers = stubs.providers();
        c.http.allowed_hosts = Some(vec![s.authority()]);
        c.http.retry_base_delay_ms = 1;
        c.http.timeout_secs = 10.0;
        c.stages.evaluate = true;
        c.annotations.articles = Some(ann.join("articles.jsonl"));
        c.annotations.repositories = Some(ann.join("repositories.jsonl"));
        let r = &mut c.rate_limits;
        for rate in [&mut r.oa, &mut r.doi, &mut r.github, &mut r.gitlab, &mut r.gitee, &mut r.zenodo, &mut r.figshare, &mut r.osf] {
            *rate = 1000.0;
        }
        Self { stubs, dir, config: c }
    }

    pub fn pipeline(&self) -> Pipeline {
        Pipeline::new(self.config.clone()).unwrap().with_clock(fixed_clock())
    }

    pub fn out(&self) -> PathBuf {
        self.config.out_dir.clone()
    }
}

fn write_jsonl(path: &Path, rows: &[Value]) {
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    std::fs::write(path, text).unwrap();
}

/// Every file under `dir`, relative path to bytes.
pub fn tree_bytes(dir: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
