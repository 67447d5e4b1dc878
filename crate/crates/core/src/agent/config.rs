use std::collections::BTreeSet;

use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::model::{Condition, ExtractionRuleSet, ParticipantId, Region};

/// Where search requests go.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetMode {
    /// The mock engine at this base URL.
    Mock { url: String },
    /// The live engine for the agent's region.
    Live,
}

/// Inclusive bounds of the jittered pause between two queries of a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayRange {
    pub min_ms: u64,
    pub max_ms: u64,
}

impl Default for DelayRange {
    fn default() -> Self {
        DelayRange {
            min_ms: 2_000,
            max_ms: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub server_url: String,
    pub participant_id: ParticipantId,
    pub study_id: u32,
    pub condition: Condition,
    pub region: Region,
    /// IANA zone the schedule follows.
    pub timezone: String,
    pub terms: Vec<String>,
    pub rules_version: u64,
    pub rules: ExtractionRuleSet,
    /// Keep raw page sources in snapshots.
    pub retention: bool,
    pub target_mode: TargetMode,
    pub plugin_version: String,
    pub ui_language: String,
    /// Conditions the mock engine may target this agent by.
    #[serde(default)]
    pub signals: BTreeSet<Condition>,
    /// Offset of scheduled fires after the wall-clock hour.
    #[serde(default)]
    pub stagger_seconds: u32,
    #[serde(default)]
    pub delay: DelayRange,
    /// Seeds cycle orders, delays and mock request seeds.
    #[serde(default)]
    pub seed: u64,
}

impl AgentConfig {
    pub fn tz(&self) -> Tz {
        self.timezone.parse().unwrap_or(Tz::UTC)
    }

    pub fn tld(&self) -> &'static str {
        self.region.tld()
    }
}

/// Default schedule zone for a region.
pub fn default_timezone(region: Region) -> &'static str {
    match region {
        Region::Australia => "Australia/Sydney",
        Region::Canada => "America/Toronto",
        Region::UnitedKingdom => "Europe/London",
        Region::UnitedStates => "America/New_York",
        Region::Other => "UTC",
    }
}
