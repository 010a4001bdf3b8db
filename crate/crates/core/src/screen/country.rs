//! Country-name normalization against ISO 3166 short names.

use std::collections::HashMap;
use std::sync::OnceLock;

const NAMES: &str = include_str!("../../config/iso3166.txt");
const ALIASES: &str = include_str!("../../config/country_aliases.tsv");

pub const NOT_REPORTED: &str = "not reported";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CountryMatch {
    /// Already an ISO 3166 short name (possibly differing in case/spacing).
    Exact(String),
    /// Mapped from a common alias.
    Alias { from: String, to: String },
    NotReported,
    /// Kept verbatim, flagged for review.
    Unrecognized(String),
}

impl CountryMatch {
    pub fn value(&self) -> &str {
        match self {
            CountryMatch::Exact(s) | CountryMatch::Unrecognized(s) => s,
            CountryMatch::Alias { to, .. } => to,
            CountryMatch::NotReported => NOT_REPORTED,
        }
    }
}

struct Table {
    names: HashMap<String, &'static str>,
    aliases: HashMap<String, &'static str>,
}

fn key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn table() -> &'static Table {
    static TABLE: OnceLock<Table> = OnceLock::new();
    TABLE.get_or_init(|| {
        let names = NAMES
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| (key(l), l))
            .collect();
        let aliases = ALIASES
            .lines()
            .filter_map(|l| l.split_once('\t'))
            .map(|(a, n)| (key(a), n.trim()))
            .collect();
        Table { names, aliases }
    })
}

pub fn iso_names() -> impl Iterator<Item = &'static str> {
    NAMES.lines().map(str::trim).filter(|l| !l.is_empty())
}

pub fn normalize_country(raw: &str) -> CountryMatch {
    let k = key(raw);
    if k == NOT_REPORTED {
        return CountryMatch::NotReported;
    }
    let t = table();
    if let Some(name) = t.names.get(&k) {
        return CountryMatch::Exact(name.to_string());
    }
    if let Some(name) = t.aliases.get(&k) {
        return CountryMatch::Alias {
            from: raw.to_string(),
            to: name.to_string(),
        };
    }
    CountryMatch::Unrecognized(raw.to_string())
}
