//! Deterministic detectors over snapshot file names and contents.

use std::collections::{BTreeMap, BTreeSet};

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{normalize_languages, RepoAssessment};
use crate::compile::ContentSource;
use crate::fetch::{FileEntry, FileKind, KindRules, RepoSnapshot};

pub const DEFAULT_DETECTORS: &str = include_str!("../../config/detectors.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub version: u32,
    pub requirements: RequirementsCfg,
    pub readme: ReadmeCfg,
    pub license: LicenseCfg,
    pub tests: TestsCfg,
    pub stochastic: StochasticCfg,
    pub seeds: SeedsCfg,
    pub hardware: PatternsCfg,
    pub paper_link: PaperLinkCfg,
    pub citation: CitationCfg,
    pub data: DataCfg,
    pub documentation: DocumentationCfg,
    pub modularity: ModularityCfg,
    pub languages: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementsCfg {
    pub manifests: Vec<String>,
    pub lockfiles: Vec<String>,
    pub conda_pin: String,
    pub readme_heading: String,
    pub version_constraint: String,
    pub readme_version: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadmeCfg {
    pub min_words: usize,
    pub purpose: String,
    pub outputs: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LicenseCfg {
    pub prefixes: Vec<String>,
    pub max_depth: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestsCfg {
    pub directories: Vec<String>,
    pub files: Vec<String>,
    pub assertions: String,
    pub min_assertions: usize,
    pub min_assertions_per_100_lines: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticCfg {
    pub frameworks: String,
    pub calls: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsCfg {
    pub patterns: Vec<String>,
    pub rejected_values: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternsCfg {
    pub patterns: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaperLinkCfg {
    pub patterns: Vec<String>,
    pub excluded_doi_prefixes: Vec<String>,
    pub metadata_files: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CitationCfg {
    pub files: Vec<String>,
    pub bibtex: String,
    pub latex_cite: String,
    pub heading: String,
    pub reference: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataCfg {
    pub config_json: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentationCfg {
    pub min_comment_ratio: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModularityCfg {
    pub definitions: String,
    pub min_files_with_definitions: usize,
    pub min_definitions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evidence {
    pub path: String,
    /// 1-based; absent for file-level evidence.
    pub line: Option<usize>,
    pub pattern: String,
}

#[derive(Debug, thiserror::Error)]
pub enum DetectorConfigError {
    #[error("invalid detector config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid pattern `{pattern}`: {source}")]
    Pattern { pattern: String, source: regex::Error },
}

struct Named {
    source: String,
    re: Regex,
}

impl Named {
    fn new(p: &str, ci: bool) -> Result<Self, DetectorConfigError> {
        let re = RegexBuilder::new(p)
            .case_insensitive(ci)
            .multi_line(true)
            .build()
            .map_err(|source| DetectorConfigError::Pattern {
                pattern: p.to_string(),
                source,
            })?;
        Ok(Self {
            source: p.to_string(),
            re,
        })
    }

    fn many(ps: &[String], ci: bool) -> Result<Vec<Self>, DetectorConfigError> {
        ps.iter().map(|p| Self::new(p, ci)).collect()
    }
}

/// Compiled detector set.
pub struct Detectors {
    pub config: DetectorConfig,
    manifests: Vec<Named>,
    lockfiles: Vec<Named>,
    conda_pin: Named,
    readme_heading: Named,
    version_constraint: Named,
    readme_version: Named,
    purpose: Named,
    outputs: Named,
    test_files: Vec<Named>,
    assertions: Named,
    frameworks: Named,
    calls: Named,
    seeds: Vec<Named>,
    hardware: Vec<Named>,
    paper_links: Vec<Named>,
    metadata_files: Vec<Named>,
    citation_files: Vec<Named>,
    bibtex: Named,
    latex_cite: Named,
    cite_heading: Named,
    reference: Named,
    config_json: Vec<Named>,
    definitions: Named,
    any_heading: Regex,
}

impl Detectors {
    pub fn from_toml(text: &str) -> Result<Self, DetectorConfigError> {
        let config: DetectorConfig = toml::from_str(text)?;
        Self::new(config)
    }

    pub fn new(c: DetectorConfig) -> Result<Self, DetectorConfigError> {
        Ok(Self {
            manifests: Named::many(&c.requirements.manifests, true)?,
            lockfiles: Named::many(&c.requirements.lockfiles, true)?,
            conda_pin: Named::new(&c.requirements.conda_pin, false)?,
            readme_heading: Named::new(&c.requirements.readme_heading, false)?,
            version_constraint: Named::new(&c.requirements.version_constraint, false)?,
            readme_version: Named::new(&c.requirements.readme_version, false)?,
            purpose: Named::new(&c.readme.purpose, false)?,
            outputs: Named::new(&c.readme.outputs, false)?,
            test_files: Named::many(&c.tests.files, true)?,
            assertions: Named::new(&c.tests.assertions, false)?,
            frameworks: Named::new(&c.stochastic.frameworks, false)?,
            calls: Named::new(&c.stochastic.calls, false)?,
            seeds: Named::many(&c.seeds.patterns, false)?,
            hardware: Named::many(&c.hardware.patterns, false)?,
            paper_links: Named::many(&c.paper_link.patterns, false)?,
            metadata_files: Named::many(&c.paper_link.metadata_files, false)?,
            citation_files: Named::many(&c.citation.files, false)?,
            bibtex: Named::new(&c.citation.bibtex, false)?,
            latex_cite: Named::new(&c.citation.latex_cite, false)?,
            cite_heading: Named::new(&c.citation.heading, false)?,
            reference: Named::new(&c.citation.reference, false)?,
            config_json: Named::many(&c.data.config_json, false)?,
            definitions: Named::new(&c.modularity.definitions, false)?,
            any_heading: Regex::new(r"^\s{0,3}#{1,6}\s").expect("static pattern"),
            config: c,
        })
    }
}

impl Default for Detectors {
    fn default() -> Self {
        Self::from_toml(DEFAULT_DETECTORS).expect("bundled detectors.toml is valid")
    }
}

/// Detector output: a complete record in which subjective fields hold
/// heuristic stand-ins, the stochasticity gate, and per-field evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticFeatures {
    pub assessment: RepoAssessment,
    pub stochastic: bool,
    pub evidence: BTreeMap<String, Vec<Evidence>>,
}

fn basename(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset].bytes().filter(|b| *b == b'\n').count() + 1
}

fn file_ev(path: &str, pattern: &str) -> Evidence {
    Evidence {
        path: path.to_string(),
        line: None,
        pattern: pattern.to_string(),
    }
}

/// One readable file: raw text plus, for notebooks and R Markdown, the
/// code and prose separated.
struct Doc<'a> {
    entry: &'a FileEntry,
    text: String,
    code: String,
    prose_lines: usize,
    notebook_language: Option<String>,
}

fn notebook_parts(text: &str) -> Option<(String, usize, Option<String>)> {
    let v: Value = serde_json::from_str(text).ok()?;
    let cells = v.get("cells")?.as_array()?;
    let mut code = String::new();
    let mut prose = 0;
    for cell in cells {
        let src = match cell.get("source") {
            Some(Value::Array(a)) => a.iter().filter_map(Value::as_str).collect::<String>(),
            Some(Value::String(s)) => s.clone(),
            _ => continue,
        };
        match cell.get("cell_type").and_then(Value::as_str) {
            Some("code") => {
                code.push_str(&src);
                code.push('\n');
            }
            Some("markdown") => prose += src.lines().filter(|l| !l.trim().is_empty()).count(),
            _ => {}
        }
    }
    let lang = v
        .pointer("/metadata/kernelspec/language")
        .or_else(|| v.pointer("/metadata/language_info/name"))
        .and_then(Value::as_str)
        .map(str::to_lowercase);
    Some((code, prose, lang))
}

fn rmd_parts(text: &str) -> (String, usize) {
    let mut code = String::new();
    let mut prose = 0;
    let mut in_chunk = false;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            in_chunk = !in_chunk;
            continue;
        }
        if in_chunk {
            code.push_str(line);
            code.push('\n');
        } else if !line.trim().is_empty() {
            prose += 1;
        }
    }
    (code, prose)
}

impl<'a> Doc<'a> {
    fn load(entry: &'a FileEntry, source: &dyn ContentSource) -> Option<Self> {
        let bytes = source.read(&entry.path).ok()?;
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let ext = KindRules::extension(&entry.path);
        let (code, prose_lines, notebook_language) = match ext.as_deref() {
            Some("ipynb") => notebook_parts(&text).unwrap_or_else(|| (String::new(), 0, None)),
            Some("rmd") => {
                let (c, p) = rmd_parts(&text);
                (c, p, None)
            }
            _ => (text.clone(), 0, None),
        };
        Some(Self {
            entry,
            text,
            code,
            prose_lines,
            notebook_language,
        })
    }

    fn path(&self) -> &str {
        &self.entry.path
    }
}

#[derive(Clone, Copy)]
enum CommentStyle {
    Hash,
    Slash,
    Percent,
    Dash,
    Stata,
    Bang,
}

fn comment_style(ext: &str) -> CommentStyle {
    match ext {
        "c" | "cpp" | "h" | "java" | "js" | "ts" | "cu" | "scala" | "rs" | "go" | "stan" | "sas" => {
            CommentStyle::Slash
        }
        "m" => CommentStyle::Percent,
        "sql" => CommentStyle::Dash,
        "do" => CommentStyle::Stata,
        "f90" => CommentStyle::Bang,
        _ => CommentStyle::Hash,
    }
}

/// Counts (comment lines, code lines) in code text. Python triple-quoted
/// blocks and C-style block comments count as comments.
fn comment_counts(code: &str, style: CommentStyle) -> (usize, usize) {
    let (mut comments, mut lines) = (0, 0);
    let mut block: Option<&str> = None;
    for raw in code.lines() {
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(end) = block {
            comments += 1;
            if l.contains(end) {
                block = None;
            }
            continue;
        }
        let is_comment = match style {
            CommentStyle::Hash => {
                let quote = ["\"\"\"", "'''"]
                    .into_iter()
                    .find(|q| l.trim_start_matches('r').starts_with(q));
                if let Some(q) = quote {
                    let rest = &l[l.find(q).unwrap_or(0) + 3..];
                    if !rest.contains(q) {
                        block = Some(q);
                    }
                    comments += 1;
                    continue;
                }
                l.starts_with('#') && !l.starts_with("#!")
            }
            CommentStyle::Slash | CommentStyle::Stata => {
                if l.starts_with("/*") {
                    if !l.contains("*/") {
                        block = Some("*/");
                    }
                    comments += 1;
                    continue;
                }
                l.starts_with("//") || (l.starts_with('*') && matches!(style, CommentStyle::Stata))
            }
            CommentStyle::Percent => l.starts_with('%'),
            CommentStyle::Dash => l.starts_with("--"),
            CommentStyle::Bang => l.starts_with('!'),
        };
        if is_comment {
            comments += 1;
        } else {
            lines += 1;
        }
    }
    (comments, lines)
}

/// Section of a markdown document under the heading at `start`, up to the
/// next heading.
fn section_after<'t>(lines: &[&'t str], start: usize, any_heading: &Regex) -> Vec<(usize, &'t str)> {
    lines
        .iter()
        .enumerate()
        .skip(start + 1)
        .take_while(|(_, l)| !any_heading.is_match(l))
        .map(|(i, l)| (i, *l))
        .collect()
}

struct Collector {
    evidence: BTreeMap<String, Vec<Evidence>>,
}

impl Collector {
    fn add(&mut self, field: &str, ev: Evidence) {
        self.evidence.entry(field.to_string()).or_default().push(ev);
    }

    fn has(&self, field: &str) -> bool {
        self.evidence.get(field).is_some_and(|v| !v.is_empty())
    }

    /// First match of each pattern in `text`, recorded as evidence.
    fn scan(&mut self, field: &str, path: &str, text: &str, pats: &[&Named]) -> bool {
        let mut hit = false;
        for p in pats {
            if let Some(m) = p.re.find(text) {
                self.add(
                    field,
                    Evidence {
                        path: path.to_string(),
                        line: Some(line_of(text, m.start())),
                        pattern: p.source.clone(),
                    },
                );
                hit = true;
            }
        }
        hit
    }
}

fn matches_any<'a>(pats: &'a [Named], name: &str) -> Option<&'a Named> {
    pats.iter().find(|p| p.re.is_match(name))
}

/// Pure function of the snapshot's file list and contents.
pub fn detect_static_features(
    snapshot: &RepoSnapshot,
    source: &dyn ContentSource,
    det: &Detectors,
) -> StaticFeatures {
    let cfg = &det.config;
    let mut col = Collector {
        evidence: BTreeMap::new(),
    };
    let mut files: Vec<&FileEntry> = snapshot.files.iter().collect();
    files.sort_by(|a, b| a.path.cmp(&b.path));

    let readmes: Vec<Doc> = files
        .iter()
        .filter(|f| f.kind == FileKind::Readme)
        .filter_map(|f| Doc::load(f, source))
        .collect();
    let sources: Vec<Doc> = files
        .iter()
        .filter(|f| f.kind == FileKind::Source && f.size_bytes > 0)
        .filter_map(|f| Doc::load(f, source))
        .collect();

    // is_empty / contains_readme
    let is_empty = files.iter().all(|f| f.size_bytes == 0 || f.kind == FileKind::Readme);
    if is_empty {
        col.add("is_empty", file_ev(".", "no non-empty files besides README"));
    }
    for f in files.iter().filter(|f| f.kind == FileKind::Readme) {
        col.add("contains_readme", file_ev(&f.path, "readme basename"));
    }
    let contains_readme = col.has("contains_readme");

    // requirements
    let mut manifest_docs = Vec::new();
    for f in files.iter().filter(|f| f.size_bytes > 0 && f.kind != FileKind::Binary) {
        if let Some(p) = matches_any(&det.manifests, basename(&f.path)) {
            col.add("contains_requirements", file_ev(&f.path, &p.source));
            if let Some(d) = Doc::load(f, source) {
                manifest_docs.push(d);
            }
        }
    }
    let mut readme_req_sections: Vec<(String, Vec<(usize, String)>)> = Vec::new();
    for r in &readmes {
        let lines: Vec<&str> = r.text.lines().collect();
        for (i, l) in lines.iter().enumerate() {
            if det.readme_heading.re.is_match(l) {
                col.add(
                    "contains_requirements",
                    Evidence {
                        path: r.path().to_string(),
                        line: Some(i + 1),
                        pattern: det.readme_heading.source.clone(),
                    },
                );
                let sec = section_after(&lines, i, &det.any_heading)
                    .into_iter()
                    .map(|(j, l)| (j, l.to_string()))
                    .collect();
                readme_req_sections.push((r.path().to_string(), sec));
            }
        }
    }
    let contains_requirements = col.has("contains_requirements");
    let requirements_dependency_versions = contains_requirements.then(|| {
        for d in &manifest_docs {
            if let Some(p) = matches_any(&det.lockfiles, basename(d.path())) {
                col.add("requirements_dependency_versions", file_ev(d.path(), &p.source));
            }
            let ext = KindRules::extension(d.path());
            let mut pats = vec![&det.version_constraint];
            if matches!(ext.as_deref(), Some("yml" | "yaml")) {
                pats.push(&det.conda_pin);
            }
            col.scan("requirements_dependency_versions", d.path(), &d.text, &pats);
        }
        for (path, sec) in &readme_req_sections {
            if let Some((j, _)) = sec.iter().find(|(_, l)| det.readme_version.re.is_match(l)) {
                col.add(
                    "requirements_dependency_versions",
                    Evidence {
                        path: path.clone(),
                        line: Some(j + 1),
                        pattern: det.readme_version.source.clone(),
                    },
                );
            }
        }
        col.has("requirements_dependency_versions")
    });

    // readme purpose heuristic
    let readme_purpose_and_outputs = contains_readme.then(|| {
        let words: usize = readmes.iter().map(|r| r.text.split_whitespace().count()).sum();
        if words < cfg.readme.min_words {
            return false;
        }
        let mut purpose = false;
        let mut outputs = false;
        for r in &readmes {
            purpose |= col.scan("readme_purpose_and_outputs", r.path(), &r.text, &[&det.purpose]);
            outputs |= col.scan("readme_purpose_and_outputs", r.path(), &r.text, &[&det.outputs]);
        }
        purpose && outputs
    });

    // license
    for f in &files {
        let depth = f.path.split('/').count();
        let upper = basename(&f.path).to_ascii_uppercase();
        if depth <= cfg.license.max_depth {
            if let Some(p) = cfg.license.prefixes.iter().find(|p| upper.starts_with(p.as_str())) {
                col.add("contains_license", file_ev(&f.path, p));
            }
        }
    }

    // tests
    for f in files.iter().filter(|f| f.size_bytes > 0) {
        let parts: Vec<&str> = f.path.split('/').collect();
        if let Some(dir) = parts[..parts.len() - 1]
            .iter()
            .find(|d| cfg.tests.directories.iter().any(|t| t.eq_ignore_ascii_case(d)))
        {
            col.add("implements_tests", file_ev(&f.path, &format!("test directory `{dir}`")));
        } else if f.kind == FileKind::Source {
            if let Some(p) = matches_any(&det.test_files, basename(&f.path)) {
                col.add("implements_tests", file_ev(&f.path, &p.source));
            }
        }
    }
    if !col.has("implements_tests") {
        let mut count = 0;
        let mut lines = 0;
        let mut first = Vec::new();
        for d in &sources {
            lines += d.code.lines().filter(|l| !l.trim().is_empty()).count();
            for m in det.assertions.re.find_iter(&d.code) {
                count += 1;
                if first.len() < 5 {
                    first.push(Evidence {
                        path: d.path().to_string(),
                        line: Some(line_of(&d.code, m.start())),
                        pattern: det.assertions.source.clone(),
                    });
                }
            }
        }
        let per_100 = if lines == 0 { 0.0 } else { count as f64 * 100.0 / lines as f64 };
        if count >= cfg.tests.min_assertions && per_100 >= cfg.tests.min_assertions_per_100_lines {
            for e in first {
                col.add("implements_tests", e);
            }
        }
    }

    // stochasticity gate and seeds
    let mut stochastic = false;
    for d in &sources {
        stochastic |= col.scan("stochastic", d.path(), &d.code, &[&det.frameworks, &det.calls]);
    }
    let fixes_seed_if_stochastic = stochastic.then(|| {
        for d in &sources {
            for p in &det.seeds {
                let found = p.re.find_iter(&d.code).find(|m| {
                    let tail = m
                        .as_str()
                        .rsplit(['=', '('])
                        .next()
                        .unwrap_or_default()
                        .trim();
                    !cfg.seeds.rejected_values.iter().any(|r| r == tail)
                });
                if let Some(m) = found {
                    col.add(
                        "fixes_seed_if_stochastic",
                        Evidence {
                            path: d.path().to_string(),
                            line: Some(line_of(&d.code, m.start())),
                            pattern: p.source.clone(),
                        },
                    );
                }
            }
        }
        col.has("fixes_seed_if_stochastic")
    });

    // hardware
    let hw: Vec<&Named> = det.hardware.iter().collect();
    for r in &readmes {
        col.scan("lists_hardware_requirements", r.path(), &r.text, &hw);
    }

    // paper link
    let excluded = &cfg.paper_link.excluded_doi_prefixes;
    let mut link_docs: Vec<&Doc> = readmes.iter().collect();
    let metadata: Vec<Doc> = files
        .iter()
        .filter(|f| f.size_bytes > 0 && matches_any(&det.metadata_files, basename(&f.path)).is_some())
        .filter_map(|f| Doc::load(f, source))
        .collect();
    link_docs.extend(metadata.iter());
    for d in &link_docs {
        for p in &det.paper_links {
            let hit = p
                .re
                .find_iter(&d.text)
                .find(|m| !excluded.iter().any(|x| m.as_str().contains(x.as_str())));
            if let Some(m) = hit {
                col.add(
                    "contains_link_to_paper",
                    Evidence {
                        path: d.path().to_string(),
                        line: Some(line_of(&d.text, m.start())),
                        pattern: p.source.clone(),
                    },
                );
            }
        }
    }

    // citation
    for f in files.iter().filter(|f| f.size_bytes > 0) {
        if let Some(p) = matches_any(&det.citation_files, basename(&f.path)) {
            col.add("contains_citation", file_ev(&f.path, &p.source));
        }
    }
    for r in &readmes {
        col.scan("contains_citation", r.path(), &r.text, &[&det.bibtex, &det.latex_cite]);
        let lines: Vec<&str> = r.text.lines().collect();
        for (i, l) in lines.iter().enumerate() {
            if !det.cite_heading.re.is_match(l) {
                continue;
            }
            let sec = section_after(&lines, i, &det.any_heading);
            if let Some((j, _)) = sec.iter().find(|(_, l)| det.reference.re.is_match(l)) {
                col.add(
                    "contains_citation",
                    Evidence {
                        path: r.path().to_string(),
                        line: Some(j + 1),
                        pattern: det.cite_heading.source.clone(),
                    },
                );
            }
        }
    }

    // data
    for f in files.iter().filter(|f| f.kind == FileKind::Data && f.size_bytes > 0) {
        if matches_any(&det.config_json, basename(&f.path)).is_none() {
            col.add("includes_data_or_sample", file_ev(&f.path, "data file"));
        }
    }

    // documentation density
    let (mut comments, mut code_lines) = (0, 0);
    for d in &sources {
        let ext = KindRules::extension(d.path()).unwrap_or_default();
        let (c, l) = comment_counts(&d.code, comment_style(&ext));
        comments += c + d.prose_lines;
        code_lines += l;
    }
    let ratio = if code_lines == 0 {
        0.0
    } else {
        comments as f64 / (comments + code_lines) as f64
    };
    if code_lines > 0 && ratio >= cfg.documentation.min_comment_ratio {
        col.add(
            "sufficient_code_documentation",
            file_ev(".", &format!("comment ratio {ratio:.2} over {} lines", comments + code_lines)),
        );
    }

    // modularity
    let mut files_with_defs = 0;
    let mut defs = 0;
    for d in &sources {
        let n = det.definitions.re.find_iter(&d.code).count();
        if n > 0 {
            files_with_defs += 1;
            defs += n;
        }
    }
    if files_with_defs >= cfg.modularity.min_files_with_definitions && defs >= cfg.modularity.min_definitions {
        col.add(
            "is_modular_and_structured",
            file_ev(".", &format!("{defs} definitions across {files_with_defs} files")),
        );
    }

    // language census
    let mut langs = BTreeSet::new();
    for d in &sources {
        let Some(ext) = KindRules::extension(d.path()) else { continue };
        let lang = match (&d.notebook_language, cfg.languages.get(&ext)) {
            (Some(l), _) if ext == "ipynb" => l.clone(),
            (_, Some(l)) => l.clone(),
            _ => continue,
        };
        if langs.insert(lang.clone()) {
            col.add("coding_languages", file_ev(d.path(), &format!("extension .{ext} -> {lang}")));
        }
    }

    let has = |f: &str| col.has(f);
    let mut a = RepoAssessment {
        is_empty,
        contains_readme,
        readme_purpose_and_outputs,
        contains_requirements,
        requirements_dependency_versions,
        contains_license: has("contains_license"),
        sufficient_code_documentation: has("sufficient_code_documentation"),
        is_modular_and_structured: has("is_modular_and_structured"),
        implements_tests: has("implements_tests"),
        fixes_seed_if_stochastic,
        lists_hardware_requirements: has("lists_hardware_requirements"),
        contains_link_to_paper: has("contains_link_to_paper"),
        contains_citation: has("contains_citation"),
        includes_data_or_sample: has("includes_data_or_sample"),
        comments_and_explanations: None,
        coding_languages: normalize_languages(langs),
    };
    if is_empty {
        a.coding_languages = None;
        a.fixes_seed_if_stochastic = None;
        stochastic = false;
        for f in super::CONTENT_DEPENDENT {
            a.set_flag(f, Some(false));
        }
    }
    let mut evidence = col.evidence;
    for v in evidence.values_mut() {
        v.sort();
        v.dedup();
    }
    StaticFeatures {
        assessment: a,
        stochastic,
        evidence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::MemSource;
    use crate::fetch::{classify_files, FetchStatus};
    use crate::linkres::Provider;

    pub(crate) fn repo(files: &[(&str, &str)]) -> (RepoSnapshot, MemSource) {
        let listed: Vec<(String, u64)> = files.iter().map(|(p, c)| (p.to_string(), c.len() as u64)).collect();
        let snap = RepoSnapshot {
            canonical_root: "https://github.com/a/b".into(),
            provider: Provider::Github,
            retrieved_at: chrono::DateTime::from_timestamp(0, 0).unwrap(),
            ref_label: "main".into(),
            files: classify_files(&listed, &KindRules::default()),
            fetch_status: FetchStatus::Ok,
            content_dir: None,
            warnings: vec![],
            detail: None,
        };
        let mem = MemSource(files.iter().map(|(p, c)| (p.to_string(), c.as_bytes().to_vec())).collect());
        (snap, mem)
    }

    fn run(files: &[(&str, &str)]) -> StaticFeatures {
        let (s, m) = repo(files);
        detect_static_features(&s, &m, &Detectors::default())
    }

    #[test]
    fn pinned_requirements() {
        let f = run(&[("requirements.txt", "numpy==1.24.0\n"), ("main.py", "import numpy\n")]);
        assert!(f.assessment.contains_requirements);
        assert_eq!(f.assessment.requirements_dependency_versions, Some(true));
        let f = run(&[("requirements.txt", "numpy\npandas\n"), ("main.py", "x = 1\n")]);
        assert_eq!(f.assessment.requirements_dependency_versions, Some(false));
        let f = run(&[("main.py", "x = 1\n")]);
        assert_eq!(f.assessment.requirements_dependency_versions, None);
    }

    #[test]
    fn readme_only_is_empty() {
        let f = run(&[("README.md", "# Model\nCode coming soon.\n")]);
        assert!(f.assessment.is_empty);
        assert!(f.assessment.contains_readme);
        assert_eq!(f.assessment.coding_languages, None);
        let f = run(&[("a.py", ""), ("b.R", "")]);
        assert!(f.assessment.is_empty);
        assert!(!f.assessment.contains_readme);
        assert!(run(&[]).assessment.is_empty);
    }

    #[test]
    fn r_description_and_readme_section() {
        let f = run(&[
            ("DESCRIPTION", "Package: x\nImports: survival (>= 3.2)\n"),
            ("R/fit.R", "fit <- function(x) x\n"),
        ]);
        assert_eq!(f.assessment.requirements_dependency_versions, Some(true));
        let f = run(&[
            ("README.md", "# Tool\n\n## Dependencies\n\n- R 4.1.2\n- glmnet\n\n## Usage\nrun it, version 2.0\n"),
            ("fit.R", "x <- 1\n"),
        ]);
        assert!(f.assessment.contains_requirements);
        assert_eq!(f.assessment.requirements_dependency_versions, Some(true));
        assert_eq!(f.evidence["requirements_dependency_versions"][0].line, Some(5));
    }

    #[test]
    fn seeds_need_stochastic_gate() {
        let f = run(&[("m.py", "from sklearn.linear_model import LogisticRegression\nm = LogisticRegression(random_state=42)\n")]);
        assert!(f.stochastic);
        assert_eq!(f.assessment.fixes_seed_if_stochastic, Some(true));
        let f = run(&[("m.py", "import torch\nmodel = build(seed=None)\n")]);
        assert_eq!(f.assessment.fixes_seed_if_stochastic, Some(false));
        let f = run(&[("m.py", "print('hello')\n")]);
        assert!(!f.stochastic);
        assert_eq!(f.assessment.fixes_seed_if_stochastic, None);
        let f = run(&[("m.R", "library(caret)\nset.seed(1)\n")]);
        assert_eq!(f.assessment.fixes_seed_if_stochastic, Some(true));
    }

    #[test]
    fn license_depth_and_names() {
        assert!(run(&[("LICENSE", "MIT")]).assessment.contains_license);
        assert!(run(&[("pkg/COPYING.txt", "GPL")]).assessment.contains_license);
        assert!(!run(&[("a/b/LICENSE", "MIT")]).assessment.contains_license);
        assert!(run(&[("Licence.md", "x")]).assessment.contains_license);
    }

    #[test]
    fn tests_by_layout_and_assertions() {
        assert!(run(&[("tests/test_model.py", "def test_a(): pass\n")]).assessment.implements_tests);
        assert!(run(&[("test_model.py", "x\n")]).assessment.implements_tests);
        assert!(run(&[("tests/testthat/test-fit.R", "expect_equal(1,1)\n")]).assessment.implements_tests);
        let dense = "assert a\nassert b\nassert c\nassert d\nassert e\nx = 1\n";
        assert!(run(&[("check.py", dense)]).assessment.implements_tests);
        assert!(!run(&[("check.py", "assert a\nx = 1\n")]).assessment.implements_tests);
    }

    #[test]
    fn paper_links_skip_deposit_dois() {
        let f = run(&[("README.md", "Data: https://doi.org/10.5281/zenodo.123\n")]);
        assert!(!f.assessment.contains_link_to_paper);
        let f = run(&[("README.md", "Paper: https://doi.org/10.1038/s41591-020-1\n")]);
        assert!(f.assessment.contains_link_to_paper);
    }

    #[test]
    fn citation_sources() {
        assert!(run(&[("CITATION.cff", "cff-version: 1.2.0")]).assessment.contains_citation);
        let bib = "# X\n\n```\n@article{smith2021,\n title={X}}\n```\n";
        assert!(run(&[("README.md", bib)]).assessment.contains_citation);
        let plain = "# X\n\n## How to cite\n\nSmith J. A model. Lancet 2021.\n";
        assert!(run(&[("README.md", plain)]).assessment.contains_citation);
        let vague = "# X\n\n## Citation\n\nPlease cite our paper.\n";
        assert!(!run(&[("README.md", vague)]).assessment.contains_citation);
    }

    #[test]
    fn data_excludes_config() {
        assert!(!run(&[("config.json", "{}"), ("a.py", "x\n")]).assessment.includes_data_or_sample);
        assert!(run(&[("data/sample.csv", "a,b\n1,2\n"), ("a.py", "x\n")]).assessment.includes_data_or_sample);
    }

    #[test]
    fn languages_from_census() {
        let nb = r#"{"cells":[{"cell_type":"code","source":["x <- 1\n"]}],"metadata":{"kernelspec":{"language":"R"}}}"#;
        let f = run(&[("a.py", "x=1\n"), ("b.ipynb", nb), ("q.sql", "select 1;\n"), ("e.R", "")]);
        assert_eq!(f.assessment.coding_languages, Some(vec!["python".into(), "r".into(), "sql".into()]));
    }

    #[test]
    fn comment_density() {
        let doc = "# load data\nx = 1\n\"\"\"\nExplains y.\n\"\"\"\ny = 2\n";
        assert_eq!(comment_counts(doc, CommentStyle::Hash), (4, 2));
        assert_eq!(comment_counts("/* a\n b */\nint x;\n// c\n", CommentStyle::Slash), (3, 1));
        assert!(run(&[("a.py", doc)]).assessment.sufficient_code_documentation);
        assert!(!run(&[("a.py", "x = 1\ny = 2\n")]).assessment.sufficient_code_documentation);
    }

    #[test]
    fn modularity_threshold() {
        let a = "def f():\n    pass\ndef g():\n    pass\ndef h():\n    pass\n";
        let b = "class M:\n    def fit(self):\n        pass\n";
        assert!(run(&[("a.py", a), ("b.py", b)]).assessment.is_modular_and_structured);
        assert!(!run(&[("a.py", a)]).assessment.is_modular_and_structured);
    }

    #[test]
    fn hardware_in_readme() {
        assert!(run(&[("README.md", "Training needs an NVIDIA GPU with 16 GB VRAM.")]).assessment.lists_hardware_requirements);
        assert!(!run(&[("README.md", "Run main.py")]).assessment.lists_hardware_requirements);
    }
}
