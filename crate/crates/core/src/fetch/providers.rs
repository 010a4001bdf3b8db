//! Per-provider metadata lookups that decide what to download.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Failure, RepoFetcher};
use crate::linkres::Provider;

/// API locations; every field may point at a stub for offline runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderEndpoints {
    pub github_api: String,
    pub gitlab_api: String,
    pub gitee_api: String,
    /// Placeholders: `{owner}`, `{name}`, `{branch}`.
    pub gitee_archive: String,
    pub zenodo_api: String,
    pub figshare_api: String,
    pub osf_api: String,
    pub osf_files: String,
}

impl Default for ProviderEndpoints {
    fn default() -> Self {
        Self {
            github_api: "https://api.github.com".into(),
            gitlab_api: "https://gitlab.com/api/v4".into(),
            gitee_api: "https://gitee.com/api/v5".into(),
            gitee_archive: "https://gitee.com/{owner}/{name}/repository/archive/{branch}.zip".into(),
            zenodo_api: "https://zenodo.org/api".into(),
            figshare_api: "https://api.figshare.com/v2".into(),
            osf_api: "https://api.osf.io/v2".into(),
            osf_files: "https://files.osf.io/v1".into(),
        }
    }
}

pub(crate) fn token_env(p: Provider) -> Option<&'static str> {
    Some(match p {
        Provider::Github => "GITHUB_TOKEN",
        Provider::Gitlab => "GITLAB_TOKEN",
        Provider::Gitee => "GITEE_TOKEN",
        Provider::Zenodo => "ZENODO_TOKEN",
        Provider::Figshare => "FIGSHARE_TOKEN",
        Provider::Osf => "OSF_TOKEN",
        Provider::Unsupported => return None,
    })
}

pub(crate) fn auth_headers(p: Provider, token: Option<&str>) -> Vec<(String, String)> {
    let mut h = Vec::new();
    if p == Provider::Github {
        h.push(("Accept".to_string(), "application/vnd.github+json".to_string()));
    }
    if let Some(t) = token {
        let (k, v) = match p {
            Provider::Gitlab => ("PRIVATE-TOKEN", t.to_string()),
            Provider::Figshare => ("Authorization", format!("token {t}")),
            _ => ("Authorization", format!("Bearer {t}")),
        };
        h.push((k.to_string(), v));
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DepositFile {
    pub name: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Plan {
    Archive { url: String, ref_label: String, strip_root: bool },
    Files { files: Vec<DepositFile>, ref_label: String },
}

fn root_segments(root: &str) -> Vec<String> {
    root.splitn(4, '/')
        .nth(3)
        .unwrap_or_default()
        .split('/')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn enc(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes()).collect()
}

fn json_of(f: &RepoFetcher, p: Provider, url: &str) -> Result<Value, Failure> {
    let resp = f.call(p, url)?;
    serde_json::from_slice(&resp.body)
        .map_err(|e| Failure::ProviderError(format!("invalid JSON from {url}: {e}")))
}

fn str_field<'a>(v: &'a Value, ptr: &str) -> Option<&'a str> {
    v.pointer(ptr).and_then(Value::as_str).filter(|s| !s.is_empty())
}

pub(crate) fn plan(f: &RepoFetcher, provider: Provider, root: &str) -> Result<Plan, Failure> {
    let segs = root_segments(root);
    let ep = &f.endpoints;
    match provider {
        Provider::Github => {
            let (o, n) = (&segs[0], &segs[1]);
            let meta = json_of(f, provider, &format!("{}/repos/{o}/{n}", ep.github_api))?;
            let branch = str_field(&meta, "/default_branch")
                .ok_or_else(|| Failure::PrivateOrMissing("repository has no default branch".into()))?;
            Ok(Plan::Archive {
                url: format!("{}/repos/{o}/{n}/tarball/{}", ep.github_api, enc(branch)),
                ref_label: branch.to_string(),
                strip_root: true,
            })
        }
        Provider::Gitlab => {
            let id = enc(&segs.join("/"));
            let meta = json_of(f, provider, &format!("{}/projects/{id}", ep.gitlab_api))?;
            let branch = str_field(&meta, "/default_branch")
                .ok_or_else(|| Failure::PrivateOrMissing("repository has no default branch".into()))?;
            Ok(Plan::Archive {
                url: format!(
                    "{}/projects/{id}/repository/archive.tar.gz?sha={}",
                    ep.gitlab_api,
                    enc(branch)
                ),
                ref_label: branch.to_string(),
                strip_root: true,
            })
        }
        Provider::Gitee => {
            let (o, n) = (&segs[0], &segs[1]);
            let meta = json_of(f, provider, &format!("{}/repos/{o}/{n}", ep.gitee_api))?;
            let branch = str_field(&meta, "/default_branch")
                .ok_or_else(|| Failure::PrivateOrMissing("repository has no default branch".into()))?;
            Ok(Plan::Archive {
                url: ep
                    .gitee_archive
                    .replace("{owner}", o)
                    .replace("{name}", n)
                    .replace("{branch}", &enc(branch)),
                ref_label: branch.to_string(),
                strip_root: true,
            })
        }
        Provider::Zenodo => {
            let id = segs.last().cloned().unwrap_or_default();
            let meta = json_of(f, provider, &format!("{}/records/{id}/versions/latest", ep.zenodo_api))?;
            let latest = meta
                .get("id")
                .map(|v| v.to_string().trim_matches('"').to_string())
                .unwrap_or(id);
            let entries = meta
                .get("files")
                .and_then(|v| match v {
                    Value::Array(a) => Some(a.clone()),
                    Value::Object(o) => o.get("entries").and_then(|e| match e {
                        Value::Object(m) => Some(m.values().cloned().collect()),
                        Value::Array(a) => Some(a.clone()),
                        _ => None,
                    }),
                    _ => None,
                })
                .unwrap_or_default();
            let files = entries
                .iter()
                .filter_map(|e| {
                    Some(DepositFile {
                        name: str_field(e, "/key").or(str_field(e, "/filename"))?.to_string(),
                        url: str_field(e, "/links/self").or(str_field(e, "/links/content"))?.to_string(),
                    })
                })
                .collect();
            Ok(Plan::Files {
                files,
                ref_label: format!("record-{latest}"),
            })
        }
        Provider::Figshare => {
            let id = segs.last().cloned().unwrap_or_default();
            let meta = json_of(f, provider, &format!("{}/articles/{id}", ep.figshare_api))?;
            let version = meta.get("version").and_then(Value::as_u64).unwrap_or(1);
            let files = meta
                .get("files")
                .and_then(Value::as_array)
                .map(|a| {
                    a.iter()
                        .filter(|e| !e.get("is_link_only").and_then(Value::as_bool).unwrap_or(false))
                        .filter_map(|e| {
                            Some(DepositFile {
                                name: str_field(e, "/name")?.to_string(),
                                url: str_field(e, "/download_url")?.to_string(),
                            })
                        })
                        .collect()
                })
                .unwrap_or_default();
            Ok(Plan::Files {
                files,
                ref_label: format!("v{version}"),
            })
        }
        Provider::Osf => {
            let id = segs.first().cloned().unwrap_or_default();
            let meta = json_of(f, provider, &format!("{}/nodes/{id}/", ep.osf_api))?;
            let modified = str_field(&meta, "/data/attributes/date_modified").unwrap_or("unknown");
            Ok(Plan::Archive {
                url: format!("{}/resources/{id}/providers/osfstorage/?zip=", ep.osf_files),
                ref_label: format!("osfstorage@{modified}"),
                strip_root: false,
            })
        }
        Provider::Unsupported => Err(Failure::ProviderError("unsupported provider".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_of_roots() {
        assert_eq!(root_segments("https://github.com/a/b"), vec!["a", "b"]);
        assert_eq!(root_segments("https://gitlab.com/g/s/p"), vec!["g", "s", "p"]);
        assert_eq!(root_segments("https://osf.io/abc12"), vec!["abc12"]);
    }

    #[test]
    fn gitlab_token_header() {
        let h = auth_headers(Provider::Gitlab, Some("t"));
        assert_eq!(h, vec![("PRIVATE-TOKEN".to_string(), "t".to_string())]);
        assert_eq!(auth_headers(Provider::Zenodo, None), vec![]);
    }
}
