//! Flattening of a repository snapshot into one text document: a directory
//! tree followed by per-file sections. READMEs and source files are carried
//! whole, other textual files are capped at a token budget, binaries are
//! listed in the tree only.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fetch::{FetchStatus, FileKind, RepoSnapshot};
use crate::store::{self, StoreError};

/// Per-file token cap for data and other textual files.
pub const TOKEN_CAP: usize = 3000;
pub const TRUNCATION_MARKER: &str = "[truncated]";

/// Access to snapshot file contents by relative path.
pub trait ContentSource {
    fn read(&self, path: &str) -> std::io::Result<Vec<u8>>;
}

pub struct DirSource(pub PathBuf);

impl ContentSource for DirSource {
    fn read(&self, path: &str) -> std::io::Result<Vec<u8>> {
        fs::read(self.0.join(path))
    }
}

/// In-memory contents, used for fixtures and generated repositories.
#[derive(Debug, Clone, Default)]
pub struct MemSource(pub BTreeMap<String, Vec<u8>>);

impl ContentSource for MemSource {
    fn read(&self, path: &str) -> std::io::Result<Vec<u8>> {
        self.0
            .get(path)
            .cloned()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, path.to_string()))
    }
}

/// Whitespace-delimited word count.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Longest prefix of `text` holding at most `max` tokens, cut right after
/// the last kept token. Returns the prefix and whether anything was cut.
pub fn truncate_to_tokens(text: &str, max: usize) -> (&str, bool) {
    let mut seen = 0;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_token && seen == max {
                if text[i..].split_whitespace().next().is_none() {
                    return (text, false);
                }
                return (&text[..i], true);
            }
            in_token = false;
        } else if !in_token {
            in_token = true;
            seen += 1;
            if seen > max {
                return (&text[..i], true);
            }
        }
    }
    (text, false)
}

#[derive(Default)]
struct TreeNode {
    dirs: BTreeMap<String, TreeNode>,
    files: BTreeMap<String, ()>,
}

/// Indented listing of `paths` under a `.` root; directories carry a
/// trailing `/`, entries are sorted by name within each directory.
pub fn render_tree<'a>(paths: impl IntoIterator<Item = &'a str>) -> String {
    let mut root = TreeNode::default();
    for p in paths {
        let parts: Vec<&str> = p.split('/').filter(|s| !s.is_empty()).collect();
        let Some((file, dirs)) = parts.split_last() else {
            continue;
        };
        let mut node = &mut root;
        for d in dirs {
            node = node.dirs.entry(d.to_string()).or_default();
        }
        node.files.insert(file.to_string(), ());
    }
    let mut out = String::from(".\n");
    fn walk(node: &TreeNode, depth: usize, out: &mut String) {
        let mut names: Vec<(&String, bool)> = node
            .dirs
            .keys()
            .map(|k| (k, true))
            .chain(node.files.keys().map(|k| (k, false)))
            .collect();
        names.sort();
        for (name, is_dir) in names {
            out.push_str(&"    ".repeat(depth));
            out.push_str(name);
            if is_dir {
                out.push('/');
                out.push('\n');
                walk(&node.dirs[name], depth + 1, out);
            } else {
                out.push('\n');
            }
        }
    }
    walk(&root, 1, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inclusion {
    Full,
    Truncated,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub path: String,
    pub kind: FileKind,
    pub inclusion: Inclusion,
    pub token_count: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledRepo {
    pub canonical_root: String,
    pub tree_text: String,
    pub sections: Vec<Section>,
    pub total_tokens: usize,
    /// Source files were capped too, because the full compilation did not
    /// fit the backend budget.
    pub fallback_mode: bool,
}

impl CompiledRepo {
    pub fn section(&self, path: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.path == path)
    }

    /// The document handed to an assessor backend.
    pub fn to_text(&self) -> String {
        let mut out = format!("Repository: {}\n\nTree:\n{}", self.canonical_root, self.tree_text);
        for s in &self.sections {
            let Some(text) = &s.text else { continue };
            out.push_str(&format!("\n===== {} =====\n", s.path));
            out.push_str(text);
            if !text.ends_with('\n') {
                out.push('\n');
            }
            if s.inclusion == Inclusion::Truncated {
                out.push_str(TRUNCATION_MARKER);
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    pub token_cap: usize,
    /// Cap applied to source files in fallback mode.
    pub source_cap: Option<usize>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            token_cap: TOKEN_CAP,
            source_cap: None,
        }
    }
}

impl CompileOptions {
    pub fn fallback() -> Self {
        Self {
            token_cap: TOKEN_CAP,
            source_cap: Some(TOKEN_CAP),
        }
    }
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("snapshot of {0} is not ok")]
    NotOk(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn section_rank(kind: FileKind) -> u8 {
    match kind {
        FileKind::Readme => 0,
        FileKind::Source => 1,
        _ => 2,
    }
}

fn looks_binary(bytes: &[u8]) -> bool {
    bytes.iter().take(8192).any(|b| *b == 0)
}

pub fn compile_repo(
    snapshot: &RepoSnapshot,
    source: &dyn ContentSource,
    opts: CompileOptions,
) -> Result<CompiledRepo, CompileError> {
    if snapshot.fetch_status != FetchStatus::Ok {
        return Err(CompileError::NotOk(snapshot.canonical_root.clone()));
    }
    let tree_text = render_tree(snapshot.files.iter().map(|f| f.path.as_str()));
    let mut files: Vec<_> = snapshot.files.iter().collect();
    files.sort_by(|a, b| (section_rank(a.kind), &a.path).cmp(&(section_rank(b.kind), &b.path)));

    let mut sections = Vec::with_capacity(files.len());
    for f in files {
        let excluded = |reason: &str| Section {
            path: f.path.clone(),
            kind: f.kind,
            inclusion: Inclusion::Excluded,
            token_count: 0,
            text: None,
            reason: Some(reason.to_string()),
        };
        if f.kind == FileKind::Binary {
            sections.push(excluded("binary file"));
            continue;
        }
        let bytes = match source.read(&f.path) {
            Ok(b) => b,
            Err(e) => {
                tracing::warn!(path = %f.path, error = %e, "unreadable file excluded");
                sections.push(excluded(&format!("unreadable: {e}")));
                continue;
            }
        };
        let whole = matches!(f.kind, FileKind::Readme | FileKind::Source);
        if !whole && looks_binary(&bytes) {
            sections.push(excluded("binary content"));
            continue;
        }
        let text = String::from_utf8_lossy(&bytes);
        let cap = if whole { opts.source_cap.filter(|_| f.kind == FileKind::Source) } else { Some(opts.token_cap) };
        let (kept, truncated) = match cap {
            Some(c) => truncate_to_tokens(&text, c),
            None => (text.as_ref(), false),
        };
        sections.push(Section {
            path: f.path.clone(),
            kind: f.kind,
            inclusion: if truncated { Inclusion::Truncated } else { Inclusion::Full },
            token_count: count_tokens(kept),
            text: Some(kept.to_string()),
            reason: None,
        });
    }
    let total_tokens = sections.iter().map(|s| s.token_count).sum();
    Ok(CompiledRepo {
        canonical_root: snapshot.canonical_root.clone(),
        tree_text,
        sections,
        total_tokens,
        fallback_mode: opts.source_cap.is_some(),
    })
}

/// Compiles normally, then once more with capped sources when the result
/// exceeds `budget` tokens.
pub fn compile_within_budget(
    snapshot: &RepoSnapshot,
    source: &dyn ContentSource,
    budget: Option<usize>,
) -> Result<CompiledRepo, CompileError> {
    let full = compile_repo(snapshot, source, CompileOptions::default())?;
    match budget {
        Some(b) if full.total_tokens > b => compile_repo(snapshot, source, CompileOptions::fallback()),
        _ => Ok(full),
    }
}

/// `owner__name` style stem for a canonical root.
pub fn root_stem(canonical_root: &str) -> String {
    canonical_root
        .splitn(4, '/')
        .nth(3)
        .unwrap_or_default()
        .split('/')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("__")
}

#[derive(Serialize)]
struct Sidecar<'a> {
    canonical_root: &'a str,
    total_tokens: usize,
    fallback_mode: bool,
    sections: Vec<SectionMeta<'a>>,
}

#[derive(Serialize)]
struct SectionMeta<'a> {
    path: &'a str,
    kind: FileKind,
    inclusion: Inclusion,
    token_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<&'a str>,
}

/// Writes `<dir>/<owner>__<name>.txt` and its `.json` metadata sidecar.
pub fn persist_compiled(dir: &Path, compiled: &CompiledRepo) -> Result<PathBuf, StoreError> {
    let stem = root_stem(&compiled.canonical_root);
    let txt = dir.join(format!("{stem}.txt"));
    store::write_atomic(&txt, compiled.to_text().as_bytes())?;
    let sidecar = Sidecar {
        canonical_root: &compiled.canonical_root,
        total_tokens: compiled.total_tokens,
        fallback_mode: compiled.fallback_mode,
        sections: compiled
            .sections
            .iter()
            .map(|s| SectionMeta {
                path: &s.path,
                kind: s.kind,
                inclusion: s.inclusion,
                token_count: s.token_count,
                reason: s.reason.as_deref(),
            })
            .collect(),
    };
    store::write_json(&dir.join(format!("{stem}.json")), &sidecar)?;
    Ok(txt)
}
