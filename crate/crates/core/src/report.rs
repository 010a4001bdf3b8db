//! Cohort statistics: code sharing by year, country and journal, code
//! statement usage, repository feature prevalence, languages and
//! per-journal profiles.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assess::RepoAssessment;
use crate::prompts::CODE_STATEMENT_LOCATIONS;
use crate::screen::DispositionCounts;
use crate::store::{self, StoreError};

/// `100·num/den` rounded half-up to one decimal, computed exactly.
pub fn pct(num: usize, den: usize) -> f64 {
    assert!(den > 0, "percentage with zero denominator");
    let (num, den) = (num as u128, den as u128);
    let tenths = (2000 * num + den) / (2 * den);
    tenths as f64 / 10.0
}

/// Half-up rounding of a derived value to one decimal; ties round away
/// from zero. A small tolerance absorbs binary representation error.
pub fn round1(x: f64) -> f64 {
    let r = ((x.abs() * 10.0) + 0.5 + 1e-9).floor() / 10.0;
    if x < 0.0 && r != 0.0 {
        -r
    } else {
        r
    }
}

/// One in-scope article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleRow {
    pub article_id: String,
    pub year: Option<i32>,
    pub journal: Option<String>,
    pub country: Option<String>,
    pub source_entries: BTreeSet<String>,
    pub sharing: bool,
    /// Repository URL or the appendix sentinel, when the article links code.
    pub repo_url: Option<String>,
    pub code_statement_locations: Vec<String>,
    pub code_statement_sentence: Option<String>,
}

/// One characterized repository with its citing article's metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoRow {
    pub canonical_root: String,
    pub year: Option<i32>,
    pub journal: Option<String>,
    pub assessment: RepoAssessment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearRow {
    /// Guideline group in split mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guideline: Option<String>,
    /// Absent for articles without a publication year.
    pub year: Option<i32>,
    pub n_articles: usize,
    pub n_sharing: usize,
    pub share_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearTable {
    pub rows: Vec<YearRow>,
    /// Articles citing both guidelines (split mode only).
    pub excluded_dual: usize,
    pub excluded_dual_sharing: usize,
    /// Articles citing neither guideline (split mode only).
    pub excluded_other: usize,
    pub unknown_year: usize,
}

/// Two citation-list entry ids to split by; articles in both are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuidelineSplit {
    pub first: String,
    pub second: String,
}

pub fn share_by_year(articles: &[ArticleRow], split: Option<&GuidelineSplit>) -> YearTable {
    let mut table = YearTable {
        rows: Vec::new(),
        excluded_dual: 0,
        excluded_dual_sharing: 0,
        excluded_other: 0,
        unknown_year: 0,
    };
    let mut tally: BTreeMap<(Option<String>, Option<i32>), (usize, usize)> = BTreeMap::new();
    for a in articles {
        let group = match split {
            None => None,
            Some(s) => match (a.source_entries.contains(&s.first), a.source_entries.contains(&s.second)) {
                (true, true) => {
                    table.excluded_dual += 1;
                    table.excluded_dual_sharing += a.sharing as usize;
                    continue;
                }
                (true, false) => Some(s.first.clone()),
                (false, true) => Some(s.second.clone()),
                (false, false) => {
                    table.excluded_other += 1;
                    continue;
                }
            },
        };
        if a.year.is_none() {
            table.unknown_year += 1;
        }
        let e = tally.entry((group, a.year)).or_default();
        e.0 += 1;
        e.1 += a.sharing as usize;
    }
    if table.unknown_year > 0 {
        tracing::warn!(n = table.unknown_year, "articles without a publication year reported separately");
    }
    // Known years ascending, unknown last.
    let mut keys: Vec<_> = tally.keys().cloned().collect();
    keys.sort_by_key(|(g, y)| (g.clone(), y.is_none(), *y));
    table.rows = keys
        .into_iter()
        .map(|k| {
            let (n, s) = tally[&k];
            YearRow {
                guideline: k.0,
                year: k.1,
                n_articles: n,
                n_sharing: s,
                share_pct: pct(s, n),
            }
        })
        .collect();
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Country,
    Journal,
}

impl GroupKey {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKey::Country => "country",
            GroupKey::Journal => "journal",
        }
    }
}

pub const UNKNOWN_GROUP: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub n: usize,
    pub n_sharing: usize,
    pub share_pct: f64,
}

/// Groups with strictly more than `min_n` articles, by share descending,
/// then size descending, then name.
pub fn share_by_group(articles: &[ArticleRow], key: GroupKey, min_n: usize) -> Vec<GroupRow> {
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for a in articles {
        let g = match key {
            GroupKey::Country => a.country.clone(),
            GroupKey::Journal => a.journal.clone(),
        }
        .filter(|g| !g.trim().is_empty())
        .unwrap_or_else(|| UNKNOWN_GROUP.to_string());
        let e = tally.entry(g).or_default();
        e.0 += 1;
        e.1 += a.sharing as usize;
    }
    let mut rows: Vec<(GroupRow, (u128, u128))> = tally
        .into_iter()
        .filter(|(_, (n, _))| *n > min_n)
        .map(|(group, (n, s))| {
            (
                GroupRow {
                    group,
                    n,
                    n_sharing: s,
                    share_pct: pct(s, n),
                },
                (s as u128, n as u128),
            )
        })
        .collect();
    // Exact ratio comparison so ties in the rounded value sort stably.
    rows.sort_by(|(a, ra), (b, rb)| {
        (rb.0 * ra.1)
            .cmp(&(ra.0 * rb.1))
            .then(b.n.cmp(&a.n))
            .then(a.group.cmp(&b.group))
    });
    rows.into_iter().map(|(r, _)| r).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceCount {
    pub sentence: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementStats {
    pub n_articles: usize,
    /// Every location value, zero counts included.
    pub location_counts: BTreeMap<String, usize>,
    /// Number of statement locations per article → article count.
    pub statements_per_article: BTreeMap<usize, usize>,
    pub single_statement_pct: Option<f64>,
    /// Case-sensitive exact-string counts, most frequent first.
    pub sentence_frequency: Vec<SentenceCount>,
    pub distinct_sentences: usize,
    pub singleton_sentence_pct: Option<f64>,
}

/// Over articles that report a repository link or appendix code.
pub fn statement_stats(articles: &[ArticleRow]) -> StatementStats {
    let with_code: Vec<&ArticleRow> = articles.iter().filter(|a| a.repo_url.is_some()).collect();
    let mut location_counts: BTreeMap<String, usize> =
        CODE_STATEMENT_LOCATIONS.iter().map(|l| (l.to_string(), 0)).collect();
    let mut per_article: BTreeMap<usize, usize> = BTreeMap::new();
    let mut sentences: HashMap<&str, usize> = HashMap::new();
    for a in &with_code {
        let distinct: BTreeSet<&String> = a.code_statement_locations.iter().collect();
        for l in &distinct {
            *location_counts.entry((*l).clone()).or_default() += 1;
        }
        *per_article.entry(distinct.len()).or_default() += 1;
        if let Some(s) = a.code_statement_sentence.as_deref().filter(|s| !s.is_empty()) {
            *sentences.entry(s).or_default() += 1;
        }
    }
    let mut sentence_frequency: Vec<SentenceCount> = sentences
        .into_iter()
        .map(|(s, c)| SentenceCount {
            sentence: s.to_string(),
            count: c,
        })
        .collect();
    sentence_frequency.sort_by(|a, b| b.count.cmp(&a.count).then(a.sentence.cmp(&b.sentence)));
    let distinct = sentence_frequency.len();
    let singletons = sentence_frequency.iter().filter(|s| s.count == 1).count();
    StatementStats {
        n_articles: with_code.len(),
        location_counts,
        single_statement_pct: (!with_code.is_empty())
            .then(|| pct(per_article.get(&1).copied().unwrap_or(0), with_code.len())),
        statements_per_article: per_article,
        sentence_frequency,
        distinct_sentences: distinct,
        singleton_sentence_pct: (distinct > 0).then(|| pct(singletons, distinct)),
    }
}

/// Features reported per repository, in display order.
pub const PREVALENCE_FEATURES: [&str; 13] = [
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
];

fn denominator_note(feature: &str) -> &'static str {
    match feature {
        "readme_purpose_and_outputs" => "over all repositories; repositories without a README count as false",
        "requirements_dependency_versions" => {
            "over all repositories; repositories without requirements count as false"
        }
        "fixes_seed_if_stochastic" => "over repositories using stochastic processes only",
        _ => "over all repositories",
    }
}

/// (numerator, denominator) of one feature over a set of repositories.
fn feature_ratio<'a>(repos: impl Iterator<Item = &'a RepoAssessment>, feature: &str) -> (usize, usize) {
    let (mut num, mut den) = (0, 0);
    for a in repos {
        match feature {
            "fixes_seed_if_stochastic" => {
                if let Some(v) = a.fixes_seed_if_stochastic {
                    den += 1;
                    num += v as usize;
                }
            }
            f => {
                den += 1;
                num += (a.flag(f) == Some(true)) as usize;
            }
        }
    }
    (num, den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceRow {
    pub feature: String,
    pub numerator: usize,
    pub denominator: usize,
    pub pct: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prevalence {
    pub n_repositories: usize,
    pub excluded_empty: usize,
    pub rows: Vec<PrevalenceRow>,
}

/// Empty repositories are excluded; rows with no denominator are omitted.
pub fn feature_prevalence(repos: &[RepoRow]) -> Prevalence {
    let kept: Vec<&RepoAssessment> = repos.iter().map(|r| &r.assessment).filter(|a| !a.is_empty).collect();
    let rows = PREVALENCE_FEATURES
        .iter()
        .filter_map(|f| {
            let (num, den) = feature_ratio(kept.iter().copied(), f);
            (den > 0).then(|| PrevalenceRow {
                feature: f.to_string(),
                numerator: num,
                denominator: den,
                pct: pct(num, den),
                note: denominator_note(f).to_string(),
            })
        })
        .collect();
    Prevalence {
        n_repositories: kept.len(),
        excluded_empty: repos.len() - kept.len(),
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageRow {
    pub year: i32,
    pub language: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageTable {
    /// Overall counts of the retained languages, most frequent first.
    pub totals: Vec<(String, usize)>,
    pub rows: Vec<LanguageRow>,
    pub excluded_years: Vec<i32>,
}

/// Languages in strictly more than `min_repos_per_language` repositories
/// overall; years with fewer than `min_repos_per_year` repositories are
/// dropped from the per-year rows.
pub fn language_distribution(
    repos: &[RepoRow],
    min_repos_per_language: usize,
    min_repos_per_year: usize,
) -> LanguageTable {
    let mut totals: BTreeMap<String, usize> = BTreeMap::new();
    let mut per_year: BTreeMap<i32, usize> = BTreeMap::new();
    let mut cells: BTreeMap<(i32, String), usize> = BTreeMap::new();
    for r in repos {
        let langs: BTreeSet<&String> = r.assessment.coding_languages.iter().flatten().collect();
        for l in &langs {
            *totals.entry((*l).clone()).or_default() += 1;
        }
        if let Some(y) = r.year {
            *per_year.entry(y).or_default() += 1;
            for l in &langs {
                *cells.entry((y, (*l).clone())).or_default() += 1;
            }
        }
    }
    let kept: BTreeSet<String> = totals
        .iter()
        .filter(|(_, n)| **n > min_repos_per_language)
        .map(|(l, _)| l.clone())
        .collect();
    let excluded_years: Vec<i32> = per_year
        .iter()
        .filter(|(_, n)| **n < min_repos_per_year)
        .map(|(y, _)| *y)
        .collect();
    let mut rows: Vec<LanguageRow> = cells
        .iter()
        .filter(|((y, l), _)| kept.contains(l) && !excluded_years.contains(y))
        .map(|((y, l), c)| LanguageRow {
            year: *y,
            language: l.clone(),
            count: *c,
        })
        .collect();
    rows.sort_by(|a, b| a.year.cmp(&b.year).then(b.count.cmp(&a.count)).then(a.language.cmp(&b.language)));
    let mut totals: Vec<(String, usize)> = totals.into_iter().filter(|(l, _)| kept.contains(l)).collect();
    totals.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    LanguageTable {
        totals,
        rows,
        excluded_years,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalProfile {
    pub journal: String,
    pub n_repositories: usize,
    /// Feature → percentage, for features with a non-zero denominator.
    pub feature_pct: BTreeMap<String, f64>,
    pub mean_pct: f64,
    /// Global mean over the same features.
    pub global_mean_pct: f64,
    pub deviation: f64,
}

/// Journals with strictly more than `min_repos` non-empty repositories,
/// sorted by mean descending. The global reference covers every
/// characterized repository, not only the displayed journals.
pub fn journal_profiles(repos: &[RepoRow], min_repos: usize) -> Vec<JournalProfile> {
    let kept: Vec<&RepoRow> = repos.iter().filter(|r| !r.assessment.is_empty).collect();
    let mut by_journal: BTreeMap<String, Vec<&RepoAssessment>> = BTreeMap::new();
    for r in &kept {
        let j = r
            .journal
            .clone()
            .filter(|j| !j.trim().is_empty())
            .unwrap_or_else(|| UNKNOWN_GROUP.to_string());
        by_journal.entry(j).or_default().push(&r.assessment);
    }
    let global: BTreeMap<&str, (usize, usize)> = PREVALENCE_FEATURES
        .iter()
        .map(|f| (*f, feature_ratio(kept.iter().map(|r| &r.assessment), f)))
        .collect();
    let mut out: Vec<(JournalProfile, f64)> = by_journal
        .into_iter()
        .filter(|(_, v)| v.len() > min_repos)
        .map(|(journal, items)| {
            let mut feature_pct = BTreeMap::new();
            let (mut sum, mut gsum, mut k) = (0.0, 0.0, 0usize);
            for f in PREVALENCE_FEATURES {
                let (num, den) = feature_ratio(items.iter().copied(), f);
                let (gn, gd) = global[f];
                if den == 0 || gd == 0 {
                    continue;
                }
                let p = 100.0 * num as f64 / den as f64;
                feature_pct.insert(f.to_string(), pct(num, den));
                sum += p;
                gsum += 100.0 * gn as f64 / gd as f64;
                k += 1;
            }
            let (mean, gmean) = if k == 0 { (0.0, 0.0) } else { (sum / k as f64, gsum / k as f64) };
            (
                JournalProfile {
                    journal,
                    n_repositories: items.len(),
                    feature_pct,
                    mean_pct: round1(mean),
                    global_mean_pct: round1(gmean),
                    deviation: round1(mean - gmean),
                },
                mean,
            )
        })
        .collect();
    out.sort_by(|(a, ma), (b, mb)| mb.total_cmp(ma).then(a.journal.cmp(&b.journal)));
    out.into_iter().map(|(p, _)| p).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportParams {
    pub min_articles_per_country: usize,
    pub min_articles_per_journal: usize,
    pub min_repos_per_journal: usize,
    pub min_repos_per_language: usize,
    pub min_repos_per_year: usize,
    /// Citation-list entry ids for the per-guideline year split.
    pub guideline_split: Option<(String, String)>,
}

impl Default for ReportParams {
    fn default() -> Self {
        Self {
            min_articles_per_country: 10,
            min_articles_per_journal: 10,
            min_repos_per_journal: 5,
            min_repos_per_language: 5,
            min_repos_per_year: 5,
            guideline_split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortStats {
    pub n_articles: usize,
    pub n_repositories: usize,
    pub dispositions: Option<DispositionCounts>,
    pub by_year: YearTable,
    pub by_year_split: Option<YearTable>,
    pub by_country: Vec<GroupRow>,
    pub by_journal: Vec<GroupRow>,
    pub statement_stats: StatementStats,
    pub feature_prevalence: Prevalence,
    pub language_by_year: LanguageTable,
    pub journal_profiles: Vec<JournalProfile>,
}

pub fn cohort_stats(
    articles: &[ArticleRow],
    repos: &[RepoRow],
    dispositions: Option<DispositionCounts>,
    p: &ReportParams,
) -> CohortStats {
    let split = p.guideline_split.as_ref().map(|(a, b)| GuidelineSplit {
        first: a.clone(),
        second: b.clone(),
    });
    CohortStats {
        n_articles: articles.len(),
        n_repositories: repos.len(),
        dispositions,
        by_year: share_by_year(articles, None),
        by_year_split: split.as_ref().map(|s| share_by_year(articles, Some(s))),
        by_country: share_by_group(articles, GroupKey::Country, p.min_articles_per_country),
        by_journal: share_by_group(articles, GroupKey::Journal, p.min_articles_per_journal),
        statement_stats: statement_stats(articles),
        feature_prevalence: feature_prevalence(repos),
        language_by_year: language_distribution(repos, p.min_repos_per_language, p.min_repos_per_year),
        journal_profiles: journal_profiles(repos, p.min_repos_per_journal),
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv error for {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn fmt_pct(x: f64) -> String {
    format!("{x:.1}")
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), ReportError> {
    let err = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| err(e.into_error().into()))?;
    store::write_atomic(path, &bytes)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotEntry {
    pub figure: String,
    pub tables: Vec<String>,
    pub description: String,
}

/// Writes one CSV and one JSON file per statistic under `<out>/reports/`
/// plus `plot_manifest.json`. Returns the written paths.
pub fn write_reports(out_dir: &Path, stats: &CohortStats, p: &ReportParams) -> Result<Vec<PathBuf>, ReportError> {
    let dir = out_dir.join("reports");
    let mut written = Vec::new();
    let mut emit = |stem: &str, header: &[&str], rows: Vec<Vec<String>>, json: serde_json::Value| {
        let csv_path = dir.join(format!("{stem}.csv"));
        write_csv(&csv_path, header, rows)?;
        let json_path = dir.join(format!("{stem}.json"));
        store::write_json(&json_path, &json)?;
        written.push(csv_path);
        written.push(json_path);
        Ok::<_, ReportError>(())
    };
    let year_rows = |t: &YearTable| -> Vec<Vec<String>> {
        t.rows
            .iter()
            .map(|r| {
                vec![
                    opt(&r.guideline),
                    r.year.map(|y| y.to_string()).unwrap_or_else(|| UNKNOWN_GROUP.into()),
                    r.n_articles.to_string(),
                    r.n_sharing.to_string(),
                    fmt_pct(r.share_pct),
                ]
            })
            .collect()
    };
    let year_header = ["guideline", "year", "n_articles", "n_sharing", "share_pct"];
    emit("share_by_year", &year_header, year_rows(&stats.by_year), serde_json::to_value(&stats.by_year).unwrap_or_default())?;
    if let Some(t) = &stats.by_year_split {
        emit("share_by_year_split", &year_header, year_rows(t), serde_json::to_value(t).unwrap_or_default())?;
    }
    let group_rows = |rows: &[GroupRow]| -> Vec<Vec<String>> {
        rows.iter()
            .map(|r| vec![r.group.clone(), r.n.to_string(), r.n_sharing.to_string(), fmt_pct(r.share_pct)])
            .collect()
    };
    let country_stem = format!("share_by_country_min{}", p.min_articles_per_country);
    let journal_stem = format!("share_by_journal_min{}", p.min_articles_per_journal);
    emit(
        &country_stem,
        &["country", "n", "n_sharing", "share_pct"],
        group_rows(&stats.by_country),
        serde_json::to_value(&stats.by_country).unwrap_or_default(),
    )?;
    emit(
        &journal_stem,
        &["journal", "n", "n_sharing", "share_pct"],
        group_rows(&stats.by_journal),
        serde_json::to_value(&stats.by_journal).unwrap_or_default(),
    )?;
    let s = &stats.statement_stats;
    emit(
        "statement_locations",
        &["location", "count"],
        s.location_counts.iter().map(|(k, v)| vec![k.clone(), v.to_string()]).collect(),
        serde_json::to_value(s).unwrap_or_default(),
    )?;
    emit(
        "statement_sentences",
        &["sentence", "count"],
        s.sentence_frequency.iter().map(|r| vec![r.sentence.clone(), r.count.to_string()]).collect(),
        serde_json::to_value(&s.sentence_frequency).unwrap_or_default(),
    )?;
    emit(
        "feature_prevalence",
        &["feature", "numerator", "denominator", "pct", "note"],
        stats
            .feature_prevalence
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.feature.clone(),
                    r.numerator.to_string(),
                    r.denominator.to_string(),
                    fmt_pct(r.pct),
                    r.note.clone(),
                ]
            })
            .collect(),
        serde_json::to_value(&stats.feature_prevalence).unwrap_or_default(),
    )?;
    let lang_stem = format!(
        "language_by_year_lang{}_year{}",
        p.min_repos_per_language, p.min_repos_per_year
    );
    emit(
        &lang_stem,
        &["year", "language", "count"],
        stats
            .language_by_year
            .rows
            .iter()
            .map(|r| vec![r.year.to_string(), r.language.clone(), r.count.to_string()])
            .collect(),
        serde_json::to_value(&stats.language_by_year).unwrap_or_default(),
    )?;
    let profile_stem = format!("journal_profiles_min{}", p.min_repos_per_journal);
    let mut profile_header = vec!["journal", "n_repositories"];
    profile_header.extend(PREVALENCE_FEATURES);
    profile_header.extend(["mean_pct", "global_mean_pct", "deviation"]);
    emit(
        &profile_stem,
        &profile_header,
        stats
            .journal_profiles
            .iter()
            .map(|j| {
                let mut row = vec![j.journal.clone(), j.n_repositories.to_string()];
                row.extend(PREVALENCE_FEATURES.iter().map(|f| opt(&j.feature_pct.get(*f).map(|x| fmt_pct(*x)))));
                row.extend([fmt_pct(j.mean_pct), fmt_pct(j.global_mean_pct), fmt_pct(j.deviation)]);
                row
            })
            .collect(),
        serde_json::to_value(&stats.journal_profiles).unwrap_or_default(),
    )?;
    if let Some(d) = &stats.dispositions {
        let mut rows = vec![
            vec!["total".to_string(), d.total.to_string()],
            vec!["not_retrievable".into(), d.not_retrievable.to_string()],
            vec!["assessment_failed".into(), d.assessment_failed.to_string()],
            vec!["out_of_scope".into(), d.out_of_scope.to_string()],
            vec!["eligible".into(), d.eligible.to_string()],
        ];
        for (s, n) in &d.by_status {
            rows.push(vec![serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(), n.to_string()]);
        }
        rows.push(vec!["sharing".into(), d.sharing.to_string()]);
        emit("dispositions", &["disposition", "count"], rows, serde_json::to_value(d).unwrap_or_default())?;
    }

    let mut manifest = vec![
        PlotEntry {
            figure: "sharing_by_year".into(),
            tables: vec![if stats.by_year_split.is_some() { "share_by_year_split.csv" } else { "share_by_year.csv" }.into()],
            description: "share of articles sharing code per publication year".into(),
        },
        PlotEntry {
            figure: "sharing_by_country".into(),
            tables: vec![format!("{country_stem}.csv")],
            description: "share and count of articles by first-author country".into(),
        },
        PlotEntry {
            figure: "sharing_by_journal".into(),
            tables: vec![format!("{journal_stem}.csv")],
            description: "share of articles sharing code by journal".into(),
        },
        PlotEntry {
            figure: "repository_features".into(),
            tables: vec!["feature_prevalence.csv".into()],
            description: "percentage of repositories meeting each criterion".into(),
        },
        PlotEntry {
            figure: "journal_profiles".into(),
            tables: vec![format!("{profile_stem}.csv")],
            description: "repository criteria by journal with deviation from the global mean".into(),
        },
        PlotEntry {
            figure: "languages_by_year".into(),
            tables: vec![format!("{lang_stem}.csv")],
            description: "programming languages per publication year".into(),
        },
    ];
    if stats.dispositions.is_some() {
        manifest.insert(
            0,
            PlotEntry {
                figure: "flow_diagram".into(),
                tables: vec!["dispositions.csv".into()],
                description: "article counts per pipeline disposition".into(),
            },
        );
    }
    let mpath = dir.join("plot_manifest.json");
    store::write_json(&mpath, &manifest)?;
    written.push(mpath);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn article(id: usize, year: Option<i32>, sharing: bool) -> ArticleRow {
        ArticleRow {
            article_id: id.to_string(),
            year,
            journal: None,
            country: None,
            source_entries: BTreeSet::new(),
            sharing,
            repo_url: None,
            code_statement_locations: vec![],
            code_statement_sentence: None,
        }
    }

    #[test]
    fn exact_half_up() {
        assert_eq!(pct(1, 16), 6.3);
        assert_eq!(pct(119, 820), 14.5);
        assert_eq!(pct(184, 286), 64.3);
        assert_eq!(pct(10, 14), 71.4);
        assert_eq!(pct(1, 8), 12.5);
        assert_eq!(pct(0, 3), 0.0);
        assert_eq!(pct(3, 3), 100.0);
        assert_eq!(round1(11.85), 11.9);
        assert_eq!(round1(14.449), 14.4);
        assert_eq!(round1(0.0), 0.0);
    }

    #[test]
    fn unknown_year_row_last() {
        let arts = vec![article(1, Some(2016), true), article(2, None, false), article(3, Some(2015), false)];
        let t = share_by_year(&arts, None);
        assert_eq!(t.rows.iter().map(|r| r.year).collect::<Vec<_>>(), vec![Some(2015), Some(2016), None]);
        assert_eq!(t.unknown_year, 1);
        assert_eq!(t.rows[0].share_pct, 0.0);
    }

    #[test]
    fn split_excludes_dual() {
        let mut a = article(1, Some(2024), true);
        a.source_entries = ["t".into(), "ai".into()].into();
        let mut b = article(2, Some(2024), false);
        b.source_entries = ["ai".into()].into();
        let t = share_by_year(
            &[a, b],
            Some(&GuidelineSplit {
                first: "t".into(),
                second: "ai".into(),
            }),
        );
        assert_eq!(t.excluded_dual, 1);
        assert_eq!(t.excluded_dual_sharing, 1);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].guideline.as_deref(), Some("ai"));
    }

    #[test]
    fn strict_group_threshold() {
        let arts: Vec<ArticleRow> = (0..10)
            .map(|i| {
                let mut a = article(i, Some(2020), i < 3);
                a.journal = Some("J".into());
                a
            })
            .collect();
        assert!(share_by_group(&arts, GroupKey::Journal, 10).is_empty());
        let rows = share_by_group(&arts, GroupKey::Journal, 9);
        assert_eq!(rows[0].share_pct, 30.0);
        assert_eq!(share_by_group(&arts, GroupKey::Country, 0)[0].group, UNKNOWN_GROUP);
    }

    #[test]
    fn sentences_case_sensitive() {
        let mk = |i, s: &str| {
            let mut a = article(i, Some(2020), true);
            a.repo_url = Some("https://github.com/a/b".into());
            a.code_statement_locations = vec!["data_availability_section".into()];
            a.code_statement_sentence = Some(s.into());
            a
        };
        let s = statement_stats(&[mk(1, "Code is available at"), mk(2, "code is available at"), mk(3, "Code is available at")]);
        assert_eq!(s.sentence_frequency[0].count, 2);
        assert_eq!(s.distinct_sentences, 2);
        assert_eq!(s.statements_per_article[&1], 3);
        assert_eq!(s.location_counts.len(), 9);
    }
}
