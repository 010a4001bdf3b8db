use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Readme,
    Source,
    Data,
    Binary,
    Other,
}

/// Extension lists and thresholds for [`FileKind`] classification, loaded
/// from a versioned TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindRules {
    pub version: u32,
    pub binary_size_threshold_bytes: u64,
    pub readme_basenames: Vec<String>,
    pub source: Vec<String>,
    pub data: Vec<String>,
    pub binary: Vec<String>,
}

pub const DEFAULT_KIND_RULES: &str = include_str!("../../config/kinds.toml");

impl Default for KindRules {
    fn default() -> Self {
        toml::from_str(DEFAULT_KIND_RULES).expect("bundled kinds.toml parses")
    }
}

impl KindRules {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn extension(path: &str) -> Option<String> {
        let base = path.rsplit('/').next().unwrap_or(path);
        let (stem, ext) = base.rsplit_once('.')?;
        (!stem.is_empty() && !ext.is_empty()).then(|| ext.to_ascii_lowercase())
    }

    pub fn is_readme(&self, path: &str) -> bool {
        let base = path.rsplit('/').next().unwrap_or(path).to_ascii_lowercase();
        self.readme_basenames.iter().any(|r| *r == base)
    }

    pub fn is_source_ext(&self, ext: &str) -> bool {
        self.source.iter().any(|s| s == ext)
    }

    /// Pure function of path and size: oversized files are binary, then
    /// README basenames, then the extension lists.
    pub fn classify(&self, path: &str, size_bytes: u64) -> FileKind {
        if size_bytes > self.binary_size_threshold_bytes {
            return FileKind::Binary;
        }
        if self.is_readme(path) {
            return FileKind::Readme;
        }
        let Some(ext) = Self::extension(path) else {
            return FileKind::Other;
        };
        if self.source.contains(&ext) {
            FileKind::Source
        } else if self.data.contains(&ext) {
            FileKind::Data
        } else if self.binary.contains(&ext) {
            FileKind::Binary
        } else {
            FileKind::Other
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_rules_classify() {
        let r = KindRules::default();
        assert_eq!(r.classify("README", 10), FileKind::Readme);
        assert_eq!(r.classify("docs/readme.MD", 10), FileKind::Readme);
        assert_eq!(r.classify("README.rst", 10), FileKind::Other);
        assert_eq!(r.classify("src/model.R", 120), FileKind::Source);
        assert_eq!(r.classify("nb/Analysis.ipynb", 1), FileKind::Source);
        assert_eq!(r.classify("data/x.csv", 1), FileKind::Data);
        assert_eq!(r.classify("m.pkl", 1), FileKind::Binary);
        assert_eq!(r.classify("huge.py", 5 * 1024 * 1024 + 1), FileKind::Binary);
        assert_eq!(r.classify("Makefile", 1), FileKind::Other);
        assert_eq!(r.classify(".py", 1), FileKind::Other);
        assert_eq!(r.source.len(), 23);
    }
}
