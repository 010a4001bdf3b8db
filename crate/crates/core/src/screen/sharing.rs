use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PaperAssessment;
use crate::fetch::FetchStatus;
use crate::linkres::Resolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingStatus {
    SharesAppendix,
    SharesUnsupportedProvider,
    SharesRepository,
    LinkUnresolved,
    RepoEmpty,
    NoCode,
}

impl SharingStatus {
    pub const ALL: [SharingStatus; 6] = [
        SharingStatus::SharesAppendix,
        SharingStatus::SharesUnsupportedProvider,
        SharingStatus::SharesRepository,
        SharingStatus::LinkUnresolved,
        SharingStatus::RepoEmpty,
        SharingStatus::NoCode,
    ];

    pub fn is_sharing(self) -> bool {
        matches!(
            self,
            SharingStatus::SharesAppendix
                | SharingStatus::SharesUnsupportedProvider
                | SharingStatus::SharesRepository
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchOutcome {
    pub status: FetchStatus,
    pub has_source_code: bool,
}

/// What happened to a URL after screening: resolution, and the fetch when
/// resolution succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkOutcome {
    pub resolution: Resolution,
    pub fetch: Option<FetchOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SharingError {
    #[error("repo_url `{0}` has no link outcome")]
    MissingLinkOutcome(String),
    #[error("resolved link `{0}` has no fetch outcome")]
    MissingFetchOutcome(String),
}

pub fn determine_sharing_status(
    assessment: &PaperAssessment,
    outcome: Option<&LinkOutcome>,
) -> Result<SharingStatus, SharingError> {
    let Some(url) = assessment.repo_url.as_deref() else {
        return Ok(SharingStatus::NoCode);
    };
    if assessment.is_appendix() {
        return Ok(SharingStatus::SharesAppendix);
    }
    let outcome = outcome.ok_or_else(|| SharingError::MissingLinkOutcome(url.to_string()))?;
    Ok(match outcome.resolution {
        Resolution::UnsupportedProvider => SharingStatus::SharesUnsupportedProvider,
        Resolution::Malformed | Resolution::ProfileOnly | Resolution::DoiUnresolvable => {
            SharingStatus::LinkUnresolved
        }
        Resolution::Ok => {
            let fetch = outcome
                .fetch
                .ok_or_else(|| SharingError::MissingFetchOutcome(url.to_string()))?;
            match fetch.status {
                FetchStatus::PrivateOrMissing | FetchStatus::ProviderError => {
                    SharingStatus::LinkUnresolved
                }
                FetchStatus::Ok if fetch.has_source_code => SharingStatus::SharesRepository,
                FetchStatus::Ok => SharingStatus::RepoEmpty,
            }
        }
    })
}

/// Final place of one article in the cohort flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticleDisposition {
    NotRetrievable,
    AssessmentFailed,
    OutOfScope,
    Sharing(SharingStatus),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispositionCounts {
    pub total: usize,
    pub not_retrievable: usize,
    pub assessment_failed: usize,
    pub out_of_scope: usize,
    pub eligible: usize,
    pub by_status: BTreeMap<SharingStatus, usize>,
    pub sharing: usize,
}

impl DispositionCounts {
    pub fn tally<'a>(items: impl IntoIterator<Item = &'a ArticleDisposition>) -> Self {
        let mut c = DispositionCounts::default();
        for s in SharingStatus::ALL {
            c.by_status.insert(s, 0);
        }
        for d in items {
            c.total += 1;
            match d {
                ArticleDisposition::NotRetrievable => c.not_retrievable += 1,
                ArticleDisposition::AssessmentFailed => c.assessment_failed += 1,
                ArticleDisposition::OutOfScope => c.out_of_scope += 1,
                ArticleDisposition::Sharing(s) => {
                    c.eligible += 1;
                    *c.by_status.get_mut(s).expect("all statuses seeded") += 1;
                    if s.is_sharing() {
                        c.sharing += 1;
                    }
                }
            }
        }
        c
    }

    pub fn status(&self, s: SharingStatus) -> usize {
        self.by_status.get(&s).copied().unwrap_or(0)
    }

    /// Every article lands in exactly one bucket.
    pub fn is_conserved(&self) -> bool {
        self.not_retrievable
            + self.assessment_failed
            + self.out_of_scope
            + self.by_status.values().sum::<usize>()
            == self.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assessment(url: Option<&str>) -> PaperAssessment {
        PaperAssessment {
            is_match: true,
            reason: "r".into(),
            country_first_author_institution: "France".into(),
            repo_url: url.map(str::to_string),
            code_statement_locations: url.map(|_| vec![]),
            code_statement_sentence: None,
        }
    }

    const RESOLUTIONS: [Resolution; 5] = [
        Resolution::Ok,
        Resolution::UnsupportedProvider,
        Resolution::Malformed,
        Resolution::ProfileOnly,
        Resolution::DoiUnresolvable,
    ];
    const FETCHES: [FetchStatus; 3] = [
        FetchStatus::Ok,
        FetchStatus::PrivateOrMissing,
        FetchStatus::ProviderError,
    ];

    // Reference table written out case by case.
    fn expected(url: Option<&str>, o: Option<LinkOutcome>) -> Option<SharingStatus> {
        use SharingStatus::*;
        match (url, o) {
            (None, _) => Some(NoCode),
            (Some("Appendix"), _) => Some(SharesAppendix),
            (Some(_), None) => None,
            (Some(_), Some(o)) => match (o.resolution, o.fetch) {
                (Resolution::UnsupportedProvider, _) => Some(SharesUnsupportedProvider),
                (Resolution::Malformed, _) => Some(LinkUnresolved),
                (Resolution::ProfileOnly, _) => Some(LinkUnresolved),
                (Resolution::DoiUnresolvable, _) => Some(LinkUnresolved),
                (Resolution::Ok, None) => None,
                (Resolution::Ok, Some(FetchOutcome { status: FetchStatus::Ok, has_source_code: true })) => {
                    Some(SharesRepository)
                }
                (Resolution::Ok, Some(FetchOutcome { status: FetchStatus::Ok, has_source_code: false })) => {
                    Some(RepoEmpty)
                }
                (Resolution::Ok, Some(_)) => Some(LinkUnresolved),
            },
        }
    }

    #[test]
    fn exhaustive_over_input_space() {
        let mut outcomes = vec![None];
        for r in RESOLUTIONS {
            outcomes.push(Some(LinkOutcome { resolution: r, fetch: None }));
            for s in FETCHES {
                for src in [false, true] {
                    outcomes.push(Some(LinkOutcome {
                        resolution: r,
                        fetch: Some(FetchOutcome { status: s, has_source_code: src }),
                    }));
                }
            }
        }
        let mut cases = 0;
        for url in [None, Some("Appendix"), Some("https://github.com/a/b")] {
            for o in &outcomes {
                let got = determine_sharing_status(&assessment(url), o.as_ref()).ok();
                assert_eq!(got, expected(url, *o), "{url:?} {o:?}");
                assert_eq!(got, determine_sharing_status(&assessment(url), o.as_ref()).ok());
                cases += 1;
            }
        }
        assert_eq!(cases, 3 * (1 + 5 * 7));
    }

    #[test]
    fn url_without_outcome_is_precondition_error() {
        assert!(matches!(
            determine_sharing_status(&assessment(Some("https://x.org/a")), None),
            Err(SharingError::MissingLinkOutcome(_))
        ));
    }
}
