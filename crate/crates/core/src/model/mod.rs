//! Domain types shared by every part of the platform.
//!
//! All values here are immutable once validated and are `Send + Sync`.

mod host;
mod ids;
mod survey;
mod taxonomy;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use host::{canonicalize_host, UNKNOWN_HOST};
pub use ids::{IdError, ParticipantId, SubmissionId};
pub use survey::{
    validate_survey, AffectedStatus, AgeBand, City, FieldError, Gender, SurveyErrors,
    SurveyResponse, UsageFrequency,
};
pub use taxonomy::{HostCategory, HostLabelEntry, Tier};

/// Largest accepted time zone offset, in minutes (UTC+14).
pub const MAX_TZ_OFFSET_MINUTES: i32 = 14 * 60;

/// Medical condition a study is concerned with.
///
/// Variants are listed in assignment precedence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "pd")]
    ParkinsonsDisease,
    #[serde(rename = "ms")]
    MultipleSclerosis,
    #[serde(rename = "db")]
    Diabetes,
}

impl Condition {
    pub const ALL: [Condition; 3] = [
        Condition::ParkinsonsDisease,
        Condition::MultipleSclerosis,
        Condition::Diabetes,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Condition::ParkinsonsDisease => "pd",
            Condition::MultipleSclerosis => "ms",
            Condition::Diabetes => "db",
        }
    }

    /// Token substituted for the `[disease]` placeholder in query templates.
    pub fn query_token(self) -> &'static str {
        match self {
            Condition::ParkinsonsDisease => "parkinson's",
            Condition::MultipleSclerosis => "multiple sclerosis",
            Condition::Diabetes => "diabetes",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown code {0:?}")]
pub struct UnknownCode(pub String);

impl FromStr for Condition {
    type Err = UnknownCode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pd" => Ok(Condition::ParkinsonsDisease),
            "ms" => Ok(Condition::MultipleSclerosis),
            "db" => Ok(Condition::Diabetes),
            _ => Err(UnknownCode(s.to_string())),
        }
    }
}

/// Country of residence, which also fixes the search engine's country domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "au")]
    Australia,
    #[serde(rename = "ca")]
    Canada,
    #[serde(rename = "uk")]
    UnitedKingdom,
    #[serde(rename = "us")]
    UnitedStates,
    #[serde(rename = "other")]
    Other,
}

impl Region {
    /// The four regions studied, in the order the group table lists them.
    pub const STUDIED: [Region; 4] = [
        Region::Canada,
        Region::UnitedKingdom,
        Region::Australia,
        Region::UnitedStates,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Region::Australia => "au",
            Region::Canada => "ca",
            Region::UnitedKingdom => "uk",
            Region::UnitedStates => "us",
            Region::Other => "other",
        }
    }

    pub fn tld(self) -> &'static str {
        match self {
            Region::Australia => "com.au",
            Region::Canada => "ca",
            Region::UnitedKingdom => "co.uk",
            Region::UnitedStates | Region::Other => "com",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Region {
    type Err = UnknownCode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "au" => Ok(Region::Australia),
            "ca" => Ok(Region::Canada),
            "uk" | "gb" => Ok(Region::UnitedKingdom),
            "us" => Ok(Region::UnitedStates),
            "other" => Ok(Region::Other),
            _ => Err(UnknownCode(s.to_string())),
        }
    }
}

/// Whether a participant is a human donor or an automated baseline agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    Donor,
    Baseline,
}

impl ClientKind {
    pub fn code(self) -> &'static str {
        match self {
            ClientKind::Donor => "donor",
            ClientKind::Baseline => "baseline",
        }
    }
}

impl FromStr for ClientKind {
    type Err = UnknownCode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "donor" => Ok(ClientKind::Donor),
            "baseline" => Ok(ClientKind::Baseline),
            _ => Err(UnknownCode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub participant_id: ParticipantId,
    pub study_id: u32,
    pub survey: SurveyResponse,
    pub registered_at: DateTime<Utc>,
    pub client_kind: ClientKind,
    pub plugin_version: String,
    pub ui_language: String,
}

/// A single advertisement occurrence on a result page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdRecord {
    /// Displayed host line, verbatim.
    pub name: String,
    pub title: String,
    /// The link target as found in the page (often an ad-network relay).
    pub url: String,
    pub content: String,
    /// Canonical landing host, or `"unknown"` when it could not be decoded.
    pub resolved_host: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrganicResult {
    pub title: String,
    pub content: String,
    pub url: String,
    pub position: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopStory {
    pub title: String,
    pub author: String,
    pub url: String,
    pub position: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("blocked snapshot for {query:?} carries extracted items")]
    BlockedWithItems { query: String },
    #[error("positions in {list} are not 1-based and strictly increasing")]
    BadPositions { list: &'static str },
    #[error("ad #{index} has neither a name nor a url")]
    AnonymousAd { index: usize },
    #[error("submission has no snapshots")]
    EmptySubmission,
    #[error("time zone offset {0} minutes is out of range")]
    TzOffsetOutOfRange(i32),
    #[error("snapshot for {query:?} has an empty error note")]
    EmptyErrorNote { query: String },
}

/// One query's extracted result page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerpSnapshot {
    pub query: String,
    pub tld: String,
    pub fetched_at: DateTime<Utc>,
    pub ads: Vec<AdRecord>,
    pub results: Vec<OrganicResult>,
    pub top_stories: Vec<TopStory>,
    pub blocked: bool,
    #[serde(default)]
    pub raw_page: Option<String>,
    /// Collection problem for this query (fetch failure, selector drift).
    #[serde(default)]
    pub error: Option<String>,
}

impl SerpSnapshot {
    /// Snapshot for a page recognised as a block or captcha interstitial.
    pub fn blocked(query: &str, tld: &str, fetched_at: DateTime<Utc>) -> Self {
        SerpSnapshot {
            query: query.to_string(),
            tld: tld.to_string(),
            fetched_at,
            ads: Vec::new(),
            results: Vec::new(),
            top_stories: Vec::new(),
            blocked: true,
            raw_page: None,
            error: None,
        }
    }

    /// Snapshot with empty lists and an error annotation; `blocked` stays false.
    pub fn failed(query: &str, tld: &str, fetched_at: DateTime<Utc>, error: String) -> Self {
        SerpSnapshot {
            blocked: false,
            error: Some(error),
            ..SerpSnapshot::blocked(query, tld, fetched_at)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.blocked
            && !(self.ads.is_empty() && self.results.is_empty() && self.top_stories.is_empty())
        {
            return Err(ModelError::BlockedWithItems {
                query: self.query.clone(),
            });
        }
        if !strictly_increasing_from_one(self.results.iter().map(|r| r.position)) {
            return Err(ModelError::BadPositions { list: "results" });
        }
        if !strictly_increasing_from_one(self.top_stories.iter().map(|s| s.position)) {
            return Err(ModelError::BadPositions { list: "top_stories" });
        }
        if let Some(index) = self
            .ads
            .iter()
            .position(|ad| ad.name.is_empty() && ad.url.is_empty())
        {
            return Err(ModelError::AnonymousAd { index });
        }
        // the export writes an absent note as an empty cell
        if self.error.as_deref() == Some("") {
            return Err(ModelError::EmptyErrorNote {
                query: self.query.clone(),
            });
        }
        Ok(())
    }
}

fn strictly_increasing_from_one(positions: impl Iterator<Item = u32>) -> bool {
    let mut last = 0;
    for p in positions {
        if p <= last {
            return false;
        }
        last = p;
    }
    true
}

/// A batch of snapshots sent to the collection server in one request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub submission_id: SubmissionId,
    pub participant_id: ParticipantId,
    pub study_id: u32,
    pub plugin_version: String,
    pub sent_at: DateTime<Utc>,
    /// Signed minutes east of UTC.
    pub tz_offset_minutes: i32,
    pub ui_language: String,
    /// Seed that produced the crawl order of this cycle, when known.
    #[serde(default)]
    pub order_seed: Option<u64>,
    pub snapshots: Vec<SerpSnapshot>,
}

impl Submission {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.snapshots.is_empty() {
            return Err(ModelError::EmptySubmission);
        }
        if self.tz_offset_minutes.abs() > MAX_TZ_OFFSET_MINUTES {
            return Err(ModelError::TzOffsetOutOfRange(self.tz_offset_minutes));
        }
        self.snapshots.iter().try_for_each(SerpSnapshot::validate)
    }
}

/// Versioned selector rules mapping page structure onto snapshot fields.
///
/// Rule keys are `ad.*`, `result.*` and `story.*` field names; values are
/// selector expressions, optionally suffixed with `@attr` to read an
/// attribute instead of the element text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRuleSet {
    pub version: u64,
    pub rules: BTreeMap<String, String>,
    #[serde(default)]
    pub redirect_param_allowlist: Vec<String>,
    /// Case-insensitive substrings identifying block or captcha pages.
    #[serde(default)]
    pub block_signatures: Vec<String>,
    /// Hosts treated as ad-network click relays.
    #[serde(default)]
    pub relay_hosts: Vec<String>,
    /// Pages longer than this with zero matched containers signal selector drift.
    #[serde(default = "default_mismatch_threshold")]
    pub mismatch_threshold: usize,
}

fn default_mismatch_threshold() -> usize {
    10_000
}
