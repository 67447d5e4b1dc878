//! One query cycle and the submission it produces.

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::clock::Clock;
use super::config::{AgentConfig, TargetMode};
use super::AgentError;
use crate::extract::{ExtractError, Extractor};
use crate::mock_ise::request_seed;
use crate::model::{SerpSnapshot, Submission, SubmissionId};
use crate::query::{build_search_url, randomize_order, QuerySet, QueryTemplates};
use crate::server::ConfigBundle;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("request failed: {0}")]
    Transport(String),
    #[error("HTTP status {0}")]
    Status(u16),
}

/// Maps a search URL to the returned page.
pub trait Fetcher {
    fn fetch(&mut self, url: &str) -> Result<String, FetchError>;
}

impl<F: FnMut(&str) -> Result<String, FetchError>> Fetcher for F {
    fn fetch(&mut self, url: &str) -> Result<String, FetchError> {
        self(url)
    }
}

/// Request URL for one term under the configured target.
pub fn search_url(config: &AgentConfig, term: &str, at: DateTime<Utc>) -> Result<String, AgentError> {
    match &config.target_mode {
        TargetMode::Live => Ok(build_search_url(config.tld(), term)?),
        TargetMode::Mock { url } => {
            let seed = request_seed(
                config.seed,
                &[config.participant_id.as_str(), term, &at.timestamp_millis().to_string()],
            );
            let mut u = url::Url::parse(url).map_err(|e| AgentError::Config(e.to_string()))?;
            u.set_path("/search");
            {
                let mut q = u.query_pairs_mut();
                q.clear().append_pair("q", term).append_pair("tld", config.tld());
                let signals: Vec<&str> = config.signals.iter().map(|c| c.code()).collect();
                if !signals.is_empty() {
                    q.append_pair("signals", &signals.join(","));
                }
                q.append_pair("seed", &seed.to_string());
            }
            Ok(u.into())
        }
    }
}

/// Queries every term once, in an order shuffled by `order_seed`, pausing a
/// jittered delay between queries. Fetch failures become annotated empty
/// snapshots; block pages become blocked snapshots.
pub fn run_cycle(
    config: &AgentConfig,
    extractor: &Extractor,
    clock: &dyn Clock,
    fetcher: &mut dyn Fetcher,
    order_seed: u64,
) -> Result<Submission, AgentError> {
    let set = QuerySet::new(config.study_id, config.terms.clone())
        .map_err(|e| AgentError::PreconditionViolation(e.to_string()))?;
    let order = randomize_order(&set, order_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(order_seed ^ 0x9e37_79b9_7f4a_7c15);
    let tld = config.tld();
    let mut snapshots = Vec::with_capacity(order.len());
    for (i, term) in order.iter().enumerate() {
        if i > 0 {
            let (lo, hi) = (config.delay.min_ms, config.delay.max_ms.max(config.delay.min_ms));
            clock.sleep(Duration::milliseconds(rng.gen_range(lo..=hi) as i64));
        }
        let now = clock.now();
        let snapshot = match search_url(config, term, now).and_then(|u| fetcher.fetch(&u).map_err(AgentError::from)) {
            Err(e) => SerpSnapshot::failed(term, tld, now, e.to_string()),
            Ok(page) => match extractor.extract_snapshot(&page, term, tld, now, config.retention) {
                Ok(s) => s,
                Err(ExtractError::RuleSetMismatch { page_len, rules_version, mut snapshot }) => {
                    snapshot.error = Some(format!(
                        "no matches with rules v{rules_version} on a {page_len}-character page"
                    ));
                    *snapshot
                }
            },
        };
        snapshots.push(snapshot);
    }
    let tz_offset = super::schedule::offset_minutes(&config.tz(), clock.now());
    let id = SubmissionId::from_u128(rng.gen());
    let mut sub = package_submission(snapshots, config, clock.now(), tz_offset, id)?;
    sub.order_seed = Some(order_seed);
    Ok(sub)
}

/// Wraps snapshots with the participant's identifiers.
pub fn package_submission(
    snapshots: Vec<SerpSnapshot>,
    config: &AgentConfig,
    now: DateTime<Utc>,
    tz_offset_minutes: i32,
    submission_id: SubmissionId,
) -> Result<Submission, AgentError> {
    if snapshots.is_empty() {
        return Err(AgentError::EmptySnapshots);
    }
    let sub = Submission {
        submission_id,
        participant_id: config.participant_id.clone(),
        study_id: config.study_id,
        plugin_version: config.plugin_version.clone(),
        sent_at: now,
        tz_offset_minutes,
        ui_language: config.ui_language.clone(),
        order_seed: None,
        snapshots,
    };
    sub.validate()?;
    Ok(sub)
}

/// Adopts `offered` only if it is newer than what the agent runs. Terms are
/// recomposed from the offered templates for the agent's condition.
pub fn apply_config_update(current: &AgentConfig, offered: &ConfigBundle) -> AgentConfig {
    if offered.version <= current.rules_version {
        return current.clone();
    }
    let Ok(templates) = QueryTemplates::parse(&offered.templates) else {
        return current.clone();
    };
    let Ok(set) = templates.compose(current.study_id, current.condition) else {
        return current.clone();
    };
    if Extractor::new(offered.rules.clone()).is_err() {
        return current.clone();
    }
    AgentConfig {
        rules_version: offered.version,
        rules: offered.rules.clone(),
        terms: set.terms,
        ..current.clone()
    }
}
