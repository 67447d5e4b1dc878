//! The agent's process loop: registration, scheduled cycles, delivery and config refresh.

use std::sync::atomic::{AtomicBool, Ordering};

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::clock::Clock;
use super::config::{default_timezone, AgentConfig, DelayRange, TargetMode};
use super::cycle::{apply_config_update, run_cycle, Fetcher};
use super::queue::{StateDir, SubmissionQueue};
use super::schedule::{next_fire_instant, STARTUP_DELAY};
use super::AgentError;
use crate::extract::Extractor;
use crate::mock_ise::request_seed;
use crate::model::{ClientKind, Region, Submission, SubmissionId};
use crate::server::{ConfigBundle, RegisterRequest, RegisterResponse, SubmitAck};

/// Immediate retries after a failed delivery attempt, per contact.
pub const DELIVERY_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApiError {
    #[error("server unreachable: {0}")]
    Unreachable(String),
    #[error("server rejected request: {0}")]
    Rejected(String),
}

/// The collection server as seen by a client.
pub trait ServerApi {
    fn register(&mut self, req: &RegisterRequest) -> Result<RegisterResponse, ApiError>;
    fn submit(&mut self, sub: &Submission) -> Result<SubmitAck, ApiError>;
    /// The server's config if newer than `client_version`.
    fn config(&mut self, client_version: u64) -> Result<Option<ConfigBundle>, ApiError>;
}

/// Settings chosen locally before registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSettings {
    pub server_url: String,
    pub region: Region,
    #[serde(default)]
    pub timezone: Option<String>,
    pub target_mode: TargetMode,
    #[serde(default)]
    pub retention: bool,
    #[serde(default = "default_version")]
    pub plugin_version: String,
    #[serde(default = "default_language")]
    pub ui_language: String,
    #[serde(default)]
    pub signals: std::collections::BTreeSet<crate::model::Condition>,
    #[serde(default)]
    pub stagger_seconds: u32,
    #[serde(default)]
    pub delay: DelayRange,
    #[serde(default)]
    pub seed: u64,
}

fn default_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}
fn default_language() -> String {
    "en".to_string()
}

/// Registers with the server and fetches the current config.
pub fn register_agent(
    server: &mut dyn ServerApi,
    settings: &AgentSettings,
    survey: std::collections::BTreeMap<String, String>,
    client_kind: ClientKind,
) -> Result<AgentConfig, AgentError> {
    let response = server.register(&RegisterRequest {
        consent: true,
        survey,
        plugin_version: settings.plugin_version.clone(),
        ui_language: settings.ui_language.clone(),
        client_kind,
    })?;
    let bundle = server.config(0)?.unwrap_or_else(ConfigBundle::bundled);
    let config = AgentConfig {
        server_url: settings.server_url.clone(),
        participant_id: response.participant_id,
        study_id: response.study_id,
        condition: response.condition,
        region: settings.region,
        timezone: settings
            .timezone
            .clone()
            .unwrap_or_else(|| default_timezone(settings.region).to_string()),
        terms: response.terms,
        rules_version: bundle.version,
        rules: bundle.rules,
        retention: settings.retention,
        target_mode: settings.target_mode.clone(),
        plugin_version: settings.plugin_version.clone(),
        ui_language: settings.ui_language.clone(),
        signals: settings.signals.clone(),
        stagger_seconds: settings.stagger_seconds,
        delay: settings.delay,
        seed: settings.seed,
    };
    config.tz_checked()?;
    Ok(config)
}

impl AgentConfig {
    fn tz_checked(&self) -> Result<chrono_tz::Tz, AgentError> {
        self.timezone
            .parse()
            .map_err(|_| AgentError::Config(format!("unknown time zone {:?}", self.timezone)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleKind {
    Startup,
    Scheduled,
}

/// Progress notifications, one per state change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AgentEvent {
    Started { at: DateTime<Utc> },
    CycleStarted { kind: CycleKind, at: DateTime<Utc> },
    CycleFinished {
        kind: CycleKind,
        at: DateTime<Utc>,
        submission_id: SubmissionId,
        snapshots: usize,
        blocked: usize,
        failed: usize,
    },
    Delivered { submission_id: SubmissionId, duplicate: bool },
    DeliveryDeferred { queued: usize, reason: String },
    SetAside { submission_id: SubmissionId, reason: String },
    ConfigAdopted { version: u64 },
    Stopped { at: DateTime<Utc> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub startup_cycles: u64,
    pub scheduled_cycles: u64,
    pub snapshots: u64,
    pub delivered: u64,
}

pub struct Agent<'a, C: Clock, F: Fetcher, S: ServerApi> {
    config: AgentConfig,
    extractor: Extractor,
    queue: SubmissionQueue,
    state: Option<StateDir>,
    clock: &'a C,
    fetcher: F,
    server: S,
    rng: ChaCha8Rng,
    observer: Option<Box<dyn FnMut(&AgentEvent) + 'a>>,
}

impl<'a, C: Clock, F: Fetcher, S: ServerApi> Agent<'a, C, F, S> {
    /// An agent whose queue lives in memory.
    pub fn new(config: AgentConfig, clock: &'a C, fetcher: F, server: S) -> Result<Self, AgentError> {
        Self::build(config, SubmissionQueue::in_memory(), None, clock, fetcher, server)
    }

    /// An agent continuing from a queue carried over from a previous process.
    pub fn with_queue(
        config: AgentConfig,
        queue: SubmissionQueue,
        clock: &'a C,
        fetcher: F,
        server: S,
    ) -> Result<Self, AgentError> {
        Self::build(config, queue, None, clock, fetcher, server)
    }

    /// Ends the process, handing back what would survive it on disk.
    pub fn into_parts(self) -> (AgentConfig, SubmissionQueue, F, S) {
        (self.config, self.queue, self.fetcher, self.server)
    }

    /// An agent resuming from a state directory.
    pub fn with_state(state: StateDir, clock: &'a C, fetcher: F, server: S) -> Result<Self, AgentError> {
        let config = state
            .load_config()?
            .ok_or_else(|| AgentError::NotRegistered(state.root().display().to_string()))?;
        let queue = state.queue()?;
        Self::build(config, queue, Some(state), clock, fetcher, server)
    }

    fn build(
        config: AgentConfig,
        queue: SubmissionQueue,
        state: Option<StateDir>,
        clock: &'a C,
        fetcher: F,
        server: S,
    ) -> Result<Self, AgentError> {
        config.tz_checked()?;
        let extractor = Extractor::new(config.rules.clone())?;
        let started = clock.now().timestamp_millis().to_string();
        let rng = ChaCha8Rng::seed_from_u64(request_seed(config.seed, &[config.participant_id.as_str(), &started]));
        Ok(Agent {
            config,
            extractor,
            queue,
            state,
            clock,
            fetcher,
            server,
            rng,
            observer: None,
        })
    }

    pub fn on_event(&mut self, f: impl FnMut(&AgentEvent) + 'a) {
        self.observer = Some(Box::new(f));
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn server_mut(&mut self) -> &mut S {
        &mut self.server
    }

    fn emit(&mut self, e: AgentEvent) {
        if let Some(f) = self.observer.as_mut() {
            f(&e);
        }
    }

    /// Runs one process lifetime: a startup cycle shortly after start, then
    /// scheduled cycles, until `until` (exclusive) or `stop` is set.
    /// Cycles never overlap; fires missed while a cycle ran are coalesced
    /// into one late cycle.
    pub fn run(&mut self, until: Option<DateTime<Utc>>, stop: &AtomicBool) -> Result<RunStats, AgentError> {
        let mut stats = RunStats::default();
        let tz = self.config.tz_checked()?;
        let stagger = chrono::Duration::seconds(i64::from(self.config.stagger_seconds));
        let start = self.clock.now();
        self.emit(AgentEvent::Started { at: start });
        let mut startup = Some(start + STARTUP_DELAY);
        let mut scheduled = next_fire_instant(start, &tz, stagger);

        loop {
            let (when, kind) = match startup {
                Some(s) if s <= scheduled => (s, CycleKind::Startup),
                _ => (scheduled, CycleKind::Scheduled),
            };
            if until.is_some_and(|u| when >= u) || stop.load(Ordering::SeqCst) {
                break;
            }
            self.clock.sleep_until(when);
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let n = self.cycle(kind)?;
            stats.snapshots += n as u64;
            match kind {
                CycleKind::Startup => {
                    stats.startup_cycles += 1;
                    startup = None;
                }
                CycleKind::Scheduled => {
                    stats.scheduled_cycles += 1;
                    let now = self.clock.now();
                    scheduled = next_fire_instant(scheduled, &tz, stagger);
                    while next_fire_instant(scheduled, &tz, stagger) <= now {
                        scheduled = next_fire_instant(scheduled, &tz, stagger);
                    }
                }
            }
            stats.delivered += self.deliver()? as u64;
        }
        let at = self.clock.now();
        self.emit(AgentEvent::Stopped { at });
        Ok(stats)
    }

    /// Refreshes config, runs one cycle and queues its submission.
    pub fn cycle(&mut self, kind: CycleKind) -> Result<usize, AgentError> {
        self.refresh_config()?;
        let at = self.clock.now();
        self.emit(AgentEvent::CycleStarted { kind, at });
        let seed: u64 = self.rng.gen();
        let sub = run_cycle(&self.config, &self.extractor, self.clock, &mut self.fetcher, seed)?;
        let n = sub.snapshots.len();
        let event = AgentEvent::CycleFinished {
            kind,
            at: self.clock.now(),
            submission_id: sub.submission_id.clone(),
            snapshots: n,
            blocked: sub.snapshots.iter().filter(|s| s.blocked).count(),
            failed: sub.snapshots.iter().filter(|s| s.error.is_some()).count(),
        };
        self.queue.push(sub)?;
        self.emit(event);
        Ok(n)
    }

    fn refresh_config(&mut self) -> Result<(), AgentError> {
        let offered = match self.server.config(self.config.rules_version) {
            Ok(Some(bundle)) => bundle,
            Ok(None) | Err(_) => return Ok(()),
        };
        let updated = apply_config_update(&self.config, &offered);
        if updated.rules_version != self.config.rules_version {
            self.extractor = Extractor::new(updated.rules.clone())?;
            self.config = updated;
            if let Some(state) = &self.state {
                state.save_config(&self.config)?;
            }
            let version = self.config.rules_version;
            self.emit(AgentEvent::ConfigAdopted { version });
        }
        Ok(())
    }

    /// Sends queued submissions oldest first, stopping at the first one that
    /// cannot be delivered after the immediate retries.
    pub fn deliver(&mut self) -> Result<usize, AgentError> {
        let mut delivered = 0;
        while let Some(sub) = self.queue.front().cloned() {
            let mut outcome = self.server.submit(&sub);
            let mut retries = 0;
            while matches!(outcome, Err(ApiError::Unreachable(_))) && retries < DELIVERY_RETRIES {
                retries += 1;
                outcome = self.server.submit(&sub);
            }
            match outcome {
                Ok(ack) => {
                    self.queue.pop_front()?;
                    delivered += 1;
                    self.emit(AgentEvent::Delivered {
                        submission_id: ack.submission_id,
                        duplicate: ack.duplicate,
                    });
                }
                Err(ApiError::Rejected(reason)) => {
                    if let Some(state) = &self.state {
                        state.set_aside(&sub, &reason)?;
                    }
                    self.queue.pop_front()?;
                    self.emit(AgentEvent::SetAside {
                        submission_id: sub.submission_id,
                        reason,
                    });
                }
                Err(ApiError::Unreachable(reason)) => {
                    let queued = self.queue.len();
                    self.emit(AgentEvent::DeliveryDeferred { queued, reason });
                    break;
                }
            }
        }
        Ok(delivered)
    }
}
