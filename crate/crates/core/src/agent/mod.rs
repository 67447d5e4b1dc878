//! Headless collector: wall-clock schedule, query cycles against the mock
//! or live engine, a persistent submission queue and config updates.

mod clock;
mod config;
mod cycle;
mod queue;
mod runtime;
pub mod schedule;

use thiserror::Error;

pub use clock::{Clock, SimClock, SystemClock};
pub use config::{default_timezone, AgentConfig, DelayRange, TargetMode};
pub use cycle::{apply_config_update, package_submission, run_cycle, search_url, FetchError, Fetcher};
pub use queue::{StateDir, SubmissionQueue};
pub use runtime::{
    register_agent, Agent, AgentEvent, AgentSettings, ApiError, CycleKind, RunStats, ServerApi,
    DELIVERY_RETRIES,
};
pub use schedule::{next_fire_instant, next_fire_time, offset_minutes, FIRE_HOURS, STARTUP_DELAY};

use crate::extract::RuleError;
use crate::model::ModelError;
use crate::query::QueryError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("no snapshots to submit")]
    EmptySnapshots,
    #[error("agent is not registered (no state in {0})")]
    NotRegistered(String),
    #[error("agent config: {0}")]
    Config(String),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error(transparent)]
    Api(#[from] ApiError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("agent state: {0}")]
    Io(#[from] std::io::Error),
    #[error("agent state: {0}")]
    Json(#[from] serde_json::Error),
}
