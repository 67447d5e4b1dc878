//! Baseline fleet: planning clean agents across regions and keeping them
//! running under a restart policy, with a shared health log.

mod health;
mod plan;
mod supervise;

pub use health::{read_health_log, HealthEvent, HealthLog, HealthRecord, RestartReason, SharedBuffer};
pub use plan::{plan_fleet, ExtraAgent, FleetSpec, PlannedAgent, STAGGER_WINDOW_SECONDS};
pub use supervise::{
    next_local_time, run_fleet, supervise_agent, AgentProcess, Launcher, ProcessPoll, SupervisionSummary,
    SupervisorPolicy,
};

#[cfg(test)]
mod tests;
