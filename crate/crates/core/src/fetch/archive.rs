//! Safe extraction of tar, tar.gz and zip archives.

use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractLimits {
    pub max_total_bytes: u64,
    pub max_files: usize,
}

impl Default for ExtractLimits {
    fn default() -> Self {
        Self {
            max_total_bytes: 2 * 1024 * 1024 * 1024,
            max_files: 50_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("unrecognized archive format")]
    UnknownFormat,
    #[error("corrupt archive: {0}")]
    Corrupt(String),
    #[error("extraction limit exceeded: {0}")]
    LimitExceeded(String),
    #[error("io error during extraction: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchiveFormat {
    TarGz,
    Tar,
    Zip,
}

pub fn detect_format(path: &Path) -> io::Result<Option<ArchiveFormat>> {
    let mut head = [0u8; 262];
    let mut f = File::open(path)?;
    let mut n = 0;
    while n < head.len() {
        let k = f.read(&mut head[n..])?;
        if k == 0 {
            break;
        }
        n += k;
    }
    let head = &head[..n];
    Ok(if head.starts_with(&[0x1f, 0x8b]) {
        Some(ArchiveFormat::TarGz)
    } else if head.starts_with(b"PK\x03\x04") || head.starts_with(b"PK\x05\x06") {
        Some(ArchiveFormat::Zip)
    } else if head.len() >= 262 && &head[257..262] == b"ustar" {
        Some(ArchiveFormat::Tar)
    } else {
        None
    })
}

/// Relative, normalized form of an archive member name, or `None` when the
/// name is absolute or climbs out of the root.
pub fn sanitize_member(name: &str) -> Option<String> {
    if name.starts_with('/') || name.starts_with('\\') {
        return None;
    }
    let b = name.as_bytes();
    if b.len() >= 2 && b[1] == b':' && b[0].is_ascii_alphabetic() {
        return None;
    }
    let mut parts = Vec::new();
    for p in name.split(['/', '\\']) {
        match p {
            "" | "." => {}
            ".." => return None,
            p if p.contains('\0') => return None,
            p => parts.push(p),
        }
    }
    (!parts.is_empty()).then(|| parts.join("/"))
}

#[derive(Debug, Default)]
pub struct ExtractReport {
    pub warnings: Vec<String>,
}

struct Budget {
    limits: ExtractLimits,
    bytes: u64,
    files: usize,
}

impl Budget {
    fn add_file(&mut self) -> Result<(), ArchiveError> {
        self.files += 1;
        if self.files > self.limits.max_files {
            return Err(ArchiveError::LimitExceeded(format!(
                "more than {} files",
                self.limits.max_files
            )));
        }
        Ok(())
    }

    fn copy(&mut self, reader: &mut dyn Read, dest: &Path) -> Result<(), ArchiveError> {
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }
        let remaining = self.limits.max_total_bytes.saturating_sub(self.bytes);
        let mut out = File::create(dest)?;
        let copied = io::copy(&mut reader.take(remaining + 1), &mut out)?;
        out.flush()?;
        self.bytes += copied;
        if copied > remaining {
            return Err(ArchiveError::LimitExceeded(format!(
                "more than {} decompressed bytes",
                self.limits.max_total_bytes
            )));
        }
        Ok(())
    }
}

fn corrupt(e: impl std::fmt::Display) -> ArchiveError {
    ArchiveError::Corrupt(e.to_string())
}

fn extract_tar<R: Read>(reader: R, dest: &Path, budget: &mut Budget, report: &mut ExtractReport) -> Result<(), ArchiveError> {
    let mut archive = tar::Archive::new(reader);
    for entry in archive.entries().map_err(corrupt)? {
        let mut entry = entry.map_err(corrupt)?;
        let name = String::from_utf8_lossy(&entry.path_bytes()).into_owned();
        let kind = entry.header().entry_type();
        if kind.is_pax_global_extensions() || kind.is_pax_local_extensions() || kind.is_gnu_longname() {
            continue;
        }
        let Some(rel) = sanitize_member(&name) else {
            report.warnings.push(format!("skipped unsafe member `{name}`"));
            continue;
        };
        if kind.is_dir() {
            fs::create_dir_all(dest.join(&rel))?;
        } else if kind.is_file() {
            budget.add_file()?;
            budget.copy(&mut entry, &dest.join(&rel))?;
        } else if kind.is_symlink() || kind.is_hard_link() {
            report.warnings.push(format!("skipped link `{rel}`"));
        }
    }
    Ok(())
}

fn extract_zip(path: &Path, dest: &Path, budget: &mut Budget, report: &mut ExtractReport) -> Result<(), ArchiveError> {
    let mut archive = zip::ZipArchive::new(File::open(path)?).map_err(corrupt)?;
    for i in 0..archive.len() {
        let mut file = archive.by_index(i).map_err(corrupt)?;
        let name = file.name().to_string();
        let Some(rel) = sanitize_member(&name) else {
            report.warnings.push(format!("skipped unsafe member `{name}`"));
            continue;
        };
        if file.is_symlink() {
            report.warnings.push(format!("skipped link `{rel}`"));
        } else if file.is_dir() {
            fs::create_dir_all(dest.join(&rel))?;
        } else {
            budget.add_file()?;
            budget.copy(&mut file, &dest.join(&rel))?;
        }
    }
    Ok(())
}

/// Extracts `archive` into `dest` (which must not exist). With
/// `strip_single_root`, a lone top-level directory is flattened away, as in
/// forge-generated archives. On error nothing is left at `dest`.
pub fn extract_archive(
    archive: &Path,
    dest: &Path,
    limits: ExtractLimits,
    strip_single_root: bool,
) -> Result<ExtractReport, ArchiveError> {
    let format = detect_format(archive)?.ok_or(ArchiveError::UnknownFormat)?;
    let staging = staging_dir(dest);
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    let mut budget = Budget {
        limits,
        bytes: 0,
        files: 0,
    };
    let mut report = ExtractReport::default();
    let result = match format {
        ArchiveFormat::TarGz => extract_tar(
            flate2::read::GzDecoder::new(File::open(archive)?),
            &staging,
            &mut budget,
            &mut report,
        ),
        ArchiveFormat::Tar => extract_tar(File::open(archive)?, &staging, &mut budget, &mut report),
        ArchiveFormat::Zip => extract_zip(archive, &staging, &mut budget, &mut report),
    };
    if let Err(e) = result {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    let mut root = staging.clone();
    if strip_single_root {
        let entries: Vec<_> = fs::read_dir(&staging)?.filter_map(|e| e.ok()).collect();
        if entries.len() == 1 && entries[0].file_type()?.is_dir() {
            root = entries[0].path();
        }
    }
    if let Some(parent) = dest.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::rename(&root, dest)?;
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    Ok(report)
}

fn staging_dir(dest: &Path) -> PathBuf {
    let mut name = dest.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".extracting");
    dest.with_file_name(name)
}

/// Regular files under `root` as (relative path, size), sorted by path.
pub fn list_files(root: &Path) -> io::Result<Vec<(String, u64)>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir)? {
            let e = e?;
            let ft = e.file_type()?;
            if ft.is_dir() {
                stack.push(e.path());
            } else if ft.is_file() {
                let rel = e
                    .path()
                    .strip_prefix(root)
                    .expect("walk stays under root")
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join("/");
                out.push((rel, e.metadata()?.len()));
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitize_rejects_escape() {
        assert_eq!(sanitize_member("a/./b//c").as_deref(), Some("a/b/c"));
        assert_eq!(sanitize_member("../etc/passwd"), None);
        assert_eq!(sanitize_member("a/../../x"), None);
        assert_eq!(sanitize_member("/abs"), None);
        assert_eq!(sanitize_member("C:\\win"), None);
        assert_eq!(sanitize_member("./"), None);
    }

    fn tar_gz(entries: &[(&str, &[u8])]) -> Vec<u8> {
        let enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
        let mut b = tar::Builder::new(enc);
        for (name, data) in entries {
            let mut h = tar::Header::new_gnu();
            h.set_size(data.len() as u64);
            h.set_mode(0o644);
            h.set_entry_type(tar::EntryType::Regular);
            // write the raw name so unsafe paths survive into the archive
            let bytes = name.as_bytes();
            h.as_old_mut().name[..bytes.len()].copy_from_slice(bytes);
            h.set_cksum();
            b.append(&h, *data).unwrap();
        }
        b.into_inner().unwrap().finish().unwrap()
    }

    #[test]
    fn strips_root_and_skips_traversal() {
        let dir = tempfile::tempdir().unwrap();
        let arc = dir.path().join("a.tar.gz");
        fs::write(
            &arc,
            tar_gz(&[("repo-main/README.md", b"hi"), ("repo-main/../../evil", b"x"), ("repo-main/src/m.R", b"x <- 1")]),
        )
        .unwrap();
        let dest = dir.path().join("out");
        let report = extract_archive(&arc, &dest, ExtractLimits::default(), true).unwrap();
        assert_eq!(report.warnings.len(), 1);
        let files = list_files(&dest).unwrap();
        assert_eq!(files, vec![("README.md".to_string(), 2), ("src/m.R".to_string(), 6)]);
        assert!(!dir.path().join("evil").exists());
    }

    #[test]
    fn byte_limit_aborts_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let arc = dir.path().join("a.tar.gz");
        fs::write(&arc, tar_gz(&[("big.bin", &[0u8; 4096])])).unwrap();
        let dest = dir.path().join("out");
        let limits = ExtractLimits {
            max_total_bytes: 1000,
            max_files: 10,
        };
        let err = extract_archive(&arc, &dest, limits, false).unwrap_err();
        assert!(matches!(err, ArchiveError::LimitExceeded(_)));
        assert!(!dest.exists());
        let limits = ExtractLimits {
            max_total_bytes: 1 << 20,
            max_files: 0,
        };
        assert!(matches!(
            extract_archive(&arc, &dest, limits, false),
            Err(ArchiveError::LimitExceeded(_))
        ));
    }

    #[test]
    fn zip_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let arc = dir.path().join("a.zip");
        {
            let mut w = zip::ZipWriter::new(File::create(&arc).unwrap());
            let opts = zip::write::SimpleFileOptions::default();
            w.start_file("code/run.py", opts).unwrap();
            w.write_all(b"print(1)").unwrap();
            w.start_file("../x", opts).unwrap();
            w.write_all(b"no").unwrap();
            w.finish().unwrap();
        }
        let dest = dir.path().join("out");
        let report = extract_archive(&arc, &dest, ExtractLimits::default(), false).unwrap();
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(list_files(&dest).unwrap(), vec![("code/run.py".to_string(), 8)]);
    }

    #[test]
    fn garbage_is_unknown_format() {
        let dir = tempfile::tempdir().unwrap();
        let arc = dir.path().join("x");
        fs::write(&arc, b"<html>not found</html>").unwrap();
        assert!(matches!(
            extract_archive(&arc, &dir.path().join("o"), ExtractLimits::default(), false),
            Err(ArchiveError::UnknownFormat)
        ));
    }
}
