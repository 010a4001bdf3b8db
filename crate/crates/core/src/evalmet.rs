//! Agreement between automated outputs and human annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::linkres::{classify_provider, extract_doi, normalize_to_root, Classification, DoiResolver, Provider};
use crate::screen::APPENDIX;
use crate::store::{self, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Article,
    Repository,
}

/// Labeled fields keyed by unit id.
pub type LabelTable = BTreeMap<String, Map<String, Value>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub unit: Unit,
    pub annotators: BTreeSet<String>,
    pub records: LabelTable,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("id sets differ: missing from predictions {missing_in_pred:?}, missing from gold {missing_in_gold:?}")]
    IdMismatch {
        missing_in_pred: Vec<String>,
        missing_in_gold: Vec<String>,
    },
    #[error("zero total support")]
    ZeroSupport,
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("annotation {id}: {message}")]
    Annotation { id: String, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Field pairs where the first may only be set when the second is
/// true (or, for strings, present).
fn conditional_pairs(unit: Unit) -> &'static [(&'static str, &'static str)] {
    match unit {
        Unit::Article => &[
            ("code_statement_locations", "repo_url"),
            ("code_statement_sentence", "repo_url"),
        ],
        Unit::Repository => &[
            ("readme_purpose_and_outputs", "contains_readme"),
            ("requirements_dependency_versions", "contains_requirements"),
        ],
    }
}

fn truthy(v: Option<&Value>) -> bool {
    match v {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) => !s.trim().is_empty(),
        Some(_) => true,
    }
}

impl AnnotationSet {
    /// One JSON object per line with an `id` (or `article_id` /
    /// `canonical_root`) key, optional `annotators`, and label fields.
    pub fn from_jsonl(path: &Path, unit: Unit) -> Result<Self, EvalError> {
        let rows: Vec<Map<String, Value>> = store::read_jsonl(path)?;
        Self::from_rows(rows, unit)
    }

    pub fn from_rows(rows: Vec<Map<String, Value>>, unit: Unit) -> Result<Self, EvalError> {
        let mut set = Self {
            unit,
            annotators: BTreeSet::new(),
            records: BTreeMap::new(),
        };
        for (i, mut row) in rows.into_iter().enumerate() {
            let id = ["id", "article_id", "canonical_root"]
                .iter()
                .find_map(|k| row.remove(*k))
                .and_then(|v| match v {
                    Value::String(s) => Some(s),
                    Value::Number(n) => Some(n.to_string()),
                    _ => None,
                })
                .ok_or_else(|| EvalError::Annotation {
                    id: format!("line {}", i + 1),
                    message: "record has no id".into(),
                })?;
            if let Some(Value::Array(a)) = row.remove("annotators") {
                set.annotators.extend(a.iter().filter_map(Value::as_str).map(str::to_string));
            }
            for (child, parent) in conditional_pairs(unit) {
                if truthy(row.get(*child)) && !truthy(row.get(*parent)) {
                    return Err(EvalError::Annotation {
                        id,
                        message: format!("{child} is set while {parent} is not"),
                    });
                }
            }
            if set.records.insert(id.clone(), row).is_some() {
                return Err(EvalError::Annotation {
                    id,
                    message: "duplicate id".into(),
                });
            }
        }
        Ok(set)
    }
}

/// Class label of a JSON value; null means undefined.
pub fn label_of(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::Bool(b) => Some(b.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Array(a) => {
            let mut parts: Vec<String> = a.iter().filter_map(label_of).collect();
            parts.sort();
            Some(parts.join("|"))
        }
        other => Some(other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn check_ids<A, B>(pred: &BTreeMap<String, A>, gold: &BTreeMap<String, B>) -> Result<(), EvalError> {
    let missing_in_pred: Vec<String> = gold.keys().filter(|k| !pred.contains_key(*k)).cloned().collect();
    let missing_in_gold: Vec<String> = pred.keys().filter(|k| !gold.contains_key(*k)).cloned().collect();
    if missing_in_pred.is_empty() && missing_in_gold.is_empty() {
        Ok(())
    } else {
        Err(EvalError::IdMismatch {
            missing_in_pred,
            missing_in_gold,
        })
    }
}

/// One-vs-rest counts per class over the ids where gold is defined. Classes
/// are every defined gold or predicted label; an undefined prediction
/// matches no class.
pub fn confusion_counts(
    pred: &BTreeMap<String, Option<String>>,
    gold: &BTreeMap<String, Option<String>>,
) -> Result<BTreeMap<String, Counts>, EvalError> {
    check_ids(pred, gold)?;
    let evaluated: Vec<(&Option<String>, &String)> = gold
        .iter()
        .filter_map(|(id, g)| g.as_ref().map(|g| (&pred[id], g)))
        .collect();
    let classes: BTreeSet<&String> = evaluated
        .iter()
        .flat_map(|(p, g)| [Some(*g), p.as_ref()])
        .flatten()
        .collect();
    let mut out = BTreeMap::new();
    for c in classes {
        let mut k = Counts::default();
        for (p, g) in &evaluated {
            let predicted = p.as_ref() == Some(c);
            let actual = *g == c;
            match (predicted, actual) {
                (true, true) => k.tp += 1,
                (true, false) => k.fp += 1,
                (false, true) => k.fn_ += 1,
                (false, false) => k.tn += 1,
            }
        }
        out.insert(c.clone(), k);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Some denominator was zero and the value defaulted to 0.
    pub degenerate: bool,
}

fn ratio(num: usize, den: usize, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn precision_recall_f1(c: &Counts) -> Prf {
    let mut degenerate = false;
    let precision = ratio(c.tp, c.tp + c.fp, &mut degenerate);
    let recall = ratio(c.tp, c.tp + c.fn_, &mut degenerate);
    let f1 = if precision + recall == 0.0 {
        degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf {
        precision,
        recall,
        f1,
        degenerate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Support-weighted mean of per-label metrics.
pub fn weighted_average(rows: &[(Prf, usize)]) -> Result<Averages, EvalError> {
    let total: usize = rows.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(EvalError::ZeroSupport);
    }
    let w = |f: fn(&Prf) -> f64| rows.iter().map(|(m, n)| f(m) * *n as f64).sum::<f64>() / total as f64;
    Ok(Averages {
        precision: w(|m| m.precision),
        recall: w(|m| m.recall),
        f1: w(|m| m.f1),
    })
}

/// Metrics of pooled counts.
pub fn micro_average(counts: &[Counts]) -> Averages {
    let pooled = counts.iter().fold(Counts::default(), |a, c| Counts {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
        tn: a.tn + c.tn,
    });
    let m = precision_recall_f1(&pooled);
    Averages {
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub degenerate: bool,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_label: Vec<LabelRow>,
    pub weighted_average: Averages,
    pub micro_average: Averages,
    pub extra: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

fn row(label: &str, counts: Counts, support: usize) -> LabelRow {
    let m = precision_recall_f1(&counts);
    LabelRow {
        label: label.to_string(),
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        support,
        degenerate: m.degenerate,
        counts,
    }
}

fn finish(per_label: Vec<LabelRow>) -> Result<MetricReport, EvalError> {
    let weighted = weighted_average(
        &per_label
            .iter()
            .map(|r| {
                (
                    Prf {
                        precision: r.precision,
                        recall: r.recall,
                        f1: r.f1,
                        degenerate: r.degenerate,
                    },
                    r.support,
                )
            })
            .collect::<Vec<_>>(),
    )?;
    let micro = micro_average(&per_label.iter().map(|r| r.counts).collect::<Vec<_>>());
    let mut notes = Vec::new();
    for r in per_label.iter().filter(|r| r.degenerate) {
        notes.push(format!("{}: zero denominator, metric set to 0", r.label));
    }
    Ok(MetricReport {
        per_label,
        weighted_average: weighted,
        micro_average: micro,
        extra: BTreeMap::new(),
        notes,
    })
}

/// Multi-class report for one field: one row per class, support = gold
/// count of that class. `names` maps raw labels to display names and fixes
/// row order; unnamed classes follow in label order.
pub fn classification_report(
    pred: &BTreeMap<String, Option<String>>,
    gold: &BTreeMap<String, Option<String>>,
    names: &[(&str, &str)],
) -> Result<MetricReport, EvalError> {
    let counts = confusion_counts(pred, gold)?;
    let mut order: Vec<&String> = Vec::new();
    for (raw, _) in names {
        if let Some((k, _)) = counts.get_key_value(*raw) {
            order.push(k);
        }
    }
    order.extend(counts.keys().filter(|k| !names.iter().any(|(n, _)| n == k)));
    let rows = order
        .into_iter()
        .map(|k| {
            let c = counts[k];
            let display = names.iter().find(|(n, _)| *n == k).map_or(k.as_str(), |(_, d)| *d);
            row(display, c, c.tp + c.fn_)
        })
        .collect();
    finish(rows)
}

/// Gold-ordered label columns of one field.
pub fn field_labels(table: &LabelTable, field: &str) -> BTreeMap<String, Option<String>> {
    table
        .iter()
        .map(|(id, rec)| (id.clone(), rec.get(field).and_then(label_of)))
        .collect()
}

/// Restricts predictions to the gold ids, failing when any is missing.
pub fn align(pred: &LabelTable, gold: &LabelTable) -> Result<LabelTable, EvalError> {
    let missing: Vec<String> = gold.keys().filter(|k| !pred.contains_key(*k)).cloned().collect();
    if !missing.is_empty() {
        return Err(EvalError::IdMismatch {
            missing_in_pred: missing,
            missing_in_gold: Vec::new(),
        });
    }
    Ok(gold.keys().map(|k| (k.clone(), pred[k].clone())).collect())
}

/// Positive-class metrics per boolean feature. Support is the number of
/// units whose gold value for that feature is defined.
pub fn binary_feature_report(
    pred: &LabelTable,
    gold: &AnnotationSet,
    features: &[(&str, &str)],
) -> Result<MetricReport, EvalError> {
    let pred = align(pred, &gold.records)?;
    let mut rows = Vec::new();
    for (field, display) in features {
        let g = field_labels(&gold.records, field);
        let p = field_labels(&pred, field);
        let counts = confusion_counts(&p, &g)?;
        let support = g.values().filter(|v| v.is_some()).count();
        let positive = counts.get("true").copied().unwrap_or(Counts {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: support,
        });
        rows.push(row(display, positive, support));
    }
    let mut report = finish(rows)?;
    report.notes.push(
        "weighted_average is support-weighted over per-feature rows; micro_average pools counts".into(),
    );
    Ok(report)
}

/// Canonical form for link comparison: repository roots for supported
/// providers, deposit DOIs mapped to their landing roots, other DOIs
/// lowercased. A resolver, when given, resolves remaining DOIs.
pub fn canonical_link(raw: &str, resolver: Option<&DoiResolver>) -> Option<String> {
    let t = raw.trim();
    if t.is_empty() {
        return None;
    }
    if t.eq_ignore_ascii_case(APPENDIX) {
        return Some(APPENDIX.to_lowercase());
    }
    match classify_provider(t) {
        Classification::Provider(p) if p != Provider::Unsupported => {
            normalize_to_root(t, p).ok().or_else(|| Some(t.to_lowercase()))
        }
        Classification::Doi(doi) => canonical_doi(&doi, resolver),
        _ => match extract_doi(t) {
            Some(doi) => canonical_doi(&doi, resolver),
            None => Some(t.trim_end_matches('/').to_lowercase()),
        },
    }
}

fn canonical_doi(doi: &str, resolver: Option<&DoiResolver>) -> Option<String> {
    let lower = doi.to_lowercase();
    if let Some(id) = lower.strip_prefix("10.5281/zenodo.") {
        return Some(format!("https://zenodo.org/records/{id}"));
    }
    if let Some(rest) = lower.strip_prefix("10.6084/m9.figshare.") {
        let id = rest.split('.').next().unwrap_or(rest);
        return Some(format!("https://figshare.com/articles/{id}"));
    }
    if let Some(r) = resolver {
        if let Ok(url) = r.resolve_doi(doi) {
            if let Classification::Provider(p) = classify_provider(&url) {
                if let Ok(root) = normalize_to_root(&url, p) {
                    return Some(root);
                }
            }
        }
    }
    Some(format!("doi:{lower}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkAccuracy {
    pub evaluated: usize,
    pub correct: usize,
    pub wrong: Vec<String>,
    pub missed: Vec<String>,
    /// Links predicted where gold has none; reported, not scored.
    pub extra: Vec<String>,
    pub accuracy: f64,
}

/// Share of gold-linked articles whose predicted link is canonically
/// equal to the gold one.
pub fn link_retrieval_accuracy(
    pred: &BTreeMap<String, Option<String>>,
    gold: &BTreeMap<String, Option<String>>,
    resolver: Option<&DoiResolver>,
) -> Result<LinkAccuracy, EvalError> {
    let mut acc = LinkAccuracy {
        evaluated: 0,
        correct: 0,
        wrong: Vec::new(),
        missed: Vec::new(),
        extra: Vec::new(),
        accuracy: 0.0,
    };
    let canon = |s: &Option<String>| s.as_deref().and_then(|s| canonical_link(s, resolver));
    for (id, g) in gold {
        let p = pred.get(id).and_then(canon);
        match canon(g) {
            Some(g) => {
                acc.evaluated += 1;
                match p {
                    Some(p) if p == g => acc.correct += 1,
                    Some(_) => acc.wrong.push(id.clone()),
                    None => acc.missed.push(id.clone()),
                }
            }
            None if p.is_some() => acc.extra.push(id.clone()),
            None => {}
        }
    }
    if acc.evaluated == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    acc.accuracy = acc.correct as f64 / acc.evaluated as f64;
    Ok(acc)
}

/// Fixed-width table: label, precision, recall, F1, support, then the
/// weighted average row.
pub fn render_table(report: &MetricReport) -> String {
    let width = report
        .per_label
        .iter()
        .map(|r| r.label.chars().count())
        .chain(["Weighted average".len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{:width$}  Precision  Recall  F1 Score  Support", "");
    for r in &report.per_label {
        let _ = writeln!(
            out,
            "{:width$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}",
            r.label, r.precision, r.recall, r.f1, r.support
        );
    }
    let w = &report.weighted_average;
    let _ = writeln!(
        out,
        "{:width$}  {:>9.2}  {:>6.2}  {:>8.2}",
        "Weighted average", w.precision, w.recall, w.f1
    );
    for (k, v) in &report.extra {
        let _ = writeln!(out, "{k}: {v:.3}");
    }
    out
}
