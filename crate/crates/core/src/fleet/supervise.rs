//! Per-agent supervision: crash restarts with exponential backoff, deferred
//! proactive restarts on memory breach or at a daily local time.

use std::io;
use std::sync::atomic::{AtomicBool, Ordering};

use chrono::{DateTime, Duration, NaiveTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::health::{HealthEvent, HealthLog, RestartReason};
use super::plan::PlannedAgent;
use crate::agent::{default_timezone, AgentEvent, Clock};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisorPolicy {
    pub backoff_base_seconds: u64,
    pub backoff_cap_seconds: u64,
    /// Consecutive failures after which the agent is marked down.
    pub max_failures: u32,
    pub memory_limit_bytes: Option<u64>,
    /// Local time of the daily restart, in the agent's time zone.
    pub daily_restart: Option<NaiveTime>,
    pub poll_interval_ms: u64,
}

impl Default for SupervisorPolicy {
    fn default() -> Self {
        SupervisorPolicy {
            backoff_base_seconds: 10,
            backoff_cap_seconds: 600,
            max_failures: 10,
            memory_limit_bytes: None,
            daily_restart: NaiveTime::from_hms_opt(3, 0, 0),
            poll_interval_ms: 1000,
        }
    }
}

impl SupervisorPolicy {
    /// Delay before the restart following the `failures`-th consecutive failure.
    pub fn backoff(&self, failures: u32) -> Duration {
        let exp = failures.saturating_sub(1).min(32);
        let secs = self
            .backoff_base_seconds
            .saturating_mul(1u64 << exp)
            .min(self.backoff_cap_seconds);
        Duration::seconds(secs as i64)
    }
}

/// What a supervisor learns from one look at a running agent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProcessPoll {
    pub events: Vec<AgentEvent>,
    /// Set once the process has exited; the inner value is its exit code, if any.
    pub exited: Option<Option<i32>>,
    pub rss_bytes: Option<u64>,
}

pub trait AgentProcess {
    /// Non-blocking.
    fn poll(&mut self) -> ProcessPoll;
    /// Stops the process and waits for it.
    fn terminate(&mut self);
}

pub trait Launcher {
    type Process: AgentProcess;
    fn launch(&mut self, agent: &PlannedAgent) -> io::Result<Self::Process>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisionSummary {
    pub launches: u32,
    pub failures: u32,
    pub proactive_restarts: u32,
    pub cycles: u32,
    pub gave_up: bool,
}

/// Next instant after `now` at which the local clock in `tz` reads `at`.
/// A time skipped by a DST change moves one hour later.
pub fn next_local_time<Tz: TimeZone>(now: DateTime<Utc>, at: NaiveTime, tz: &Tz) -> DateTime<Utc> {
    let mut date = now.with_timezone(tz).date_naive();
    loop {
        let local = date.and_time(at);
        let candidate = tz
            .from_local_datetime(&local)
            .earliest()
            .or_else(|| tz.from_local_datetime(&(local + Duration::hours(1))).earliest())
            .map(|t| t.with_timezone(&Utc));
        if let Some(t) = candidate.filter(|t| *t > now) {
            return t;
        }
        date = date.succ_opt().expect("date in range");
    }
}

/// Keeps one agent running until `stop` is set or `until` passes.
/// Any exit that was not requested counts as a failure.
pub fn supervise_agent<L: Launcher>(
    agent: &PlannedAgent,
    launcher: &mut L,
    policy: &SupervisorPolicy,
    clock: &dyn Clock,
    log: &HealthLog,
    stop: &AtomicBool,
    until: Option<DateTime<Utc>>,
) -> io::Result<SupervisionSummary> {
    let tz: chrono_tz::Tz = agent
        .settings
        .timezone
        .as_deref()
        .unwrap_or(default_timezone(agent.region))
        .parse()
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "unknown time zone"))?;
    let name = agent.name.as_str();
    let poll = Duration::milliseconds(policy.poll_interval_ms.max(1) as i64);
    let mut summary = SupervisionSummary::default();
    let mut consecutive = 0u32;
    let mut process: Option<L::Process> = None;
    let mut relaunch_at = clock.now();
    let mut in_cycle = false;
    let mut pending: Option<RestartReason> = None;
    let mut next_daily = policy.daily_restart.map(|t| next_local_time(clock.now(), t, &tz));

    let fail = |consecutive: &mut u32, summary: &mut SupervisionSummary, now| -> io::Result<Option<DateTime<Utc>>> {
        *consecutive += 1;
        summary.failures += 1;
        if *consecutive >= policy.max_failures {
            log.append(name, now, HealthEvent::GaveUp { failures: *consecutive })?;
            summary.gave_up = true;
            return Ok(None);
        }
        let delay = policy.backoff(*consecutive);
        log.append(
            name,
            now,
            HealthEvent::RestartScheduled {
                failures: *consecutive,
                delay_seconds: delay.num_seconds() as u64,
            },
        )?;
        Ok(Some(now + delay))
    };

    loop {
        let now = clock.now();
        if stop.load(Ordering::SeqCst) || until.is_some_and(|u| now >= u) {
            if let Some(mut p) = process.take() {
                p.terminate();
            }
            log.append(name, now, HealthEvent::Stopped)?;
            return Ok(summary);
        }
        match process.as_mut() {
            None if now >= relaunch_at => match launcher.launch(agent) {
                Ok(p) => {
                    summary.launches += 1;
                    log.append(name, now, HealthEvent::Launched { attempt: summary.launches })?;
                    process = Some(p);
                    in_cycle = false;
                    pending = None;
                }
                Err(e) => {
                    log.append(name, now, HealthEvent::LaunchFailed { reason: e.to_string() })?;
                    match fail(&mut consecutive, &mut summary, now)? {
                        Some(t) => relaunch_at = t,
                        None => return Ok(summary),
                    }
                }
            },
            None => {}
            Some(p) => {
                let polled = p.poll();
                for event in polled.events {
                    match event {
                        AgentEvent::CycleStarted { .. } => {
                            in_cycle = true;
                            log.append(name, now, HealthEvent::CycleStarted)?;
                        }
                        AgentEvent::CycleFinished { snapshots, blocked, failed, .. } => {
                            in_cycle = false;
                            consecutive = 0;
                            summary.cycles += 1;
                            log.append(name, now, HealthEvent::CycleFinished { snapshots, blocked, failed })?;
                        }
                        _ => {}
                    }
                }
                if let Some(code) = polled.exited {
                    process = None;
                    log.append(name, now, HealthEvent::Exited { code })?;
                    match fail(&mut consecutive, &mut summary, now)? {
                        Some(t) => relaunch_at = t,
                        None => return Ok(summary),
                    }
                } else {
                    if pending.is_none() {
                        if let (Some(rss), Some(limit)) = (polled.rss_bytes, policy.memory_limit_bytes) {
                            if rss > limit {
                                log.append(name, now, HealthEvent::MemoryBreach { rss_bytes: rss, limit_bytes: limit })?;
                                pending = Some(RestartReason::Memory);
                            }
                        }
                    }
                    if let Some(due) = next_daily.filter(|d| now >= *d) {
                        next_daily = policy.daily_restart.map(|t| next_local_time(due.max(now), t, &tz));
                        pending.get_or_insert(RestartReason::Daily);
                    }
                    if let Some(reason) = pending {
                        if in_cycle {
                            log.append(name, now, HealthEvent::RestartDeferred { reason })?;
                        } else {
                            p.terminate();
                            process = None;
                            summary.proactive_restarts += 1;
                            log.append(name, now, HealthEvent::ProactiveRestart { reason })?;
                            relaunch_at = now;
                            pending = None;
                            continue;
                        }
                    }
                }
            }
        }
        clock.sleep(poll);
    }
}

/// One supervisor per agent, each on its own thread, sharing the health log.
pub fn run_fleet<L: Launcher + Clone + Send>(
    plan: &[PlannedAgent],
    launcher: &L,
    policy: &SupervisorPolicy,
    clock: &dyn Clock,
    log: &HealthLog,
    stop: &AtomicBool,
    until: Option<DateTime<Utc>>,
) -> Vec<(String, io::Result<SupervisionSummary>)> {
    std::thread::scope(|s| {
        let handles: Vec<_> = plan
            .iter()
            .map(|agent| {
                let mut launcher = launcher.clone();
                s.spawn(move || supervise_agent(agent, &mut launcher, policy, clock, log, stop, until))
            })
            .collect();
        plan.iter()
            .zip(handles)
            .map(|(a, h)| {
                let r = h
                    .join()
                    .unwrap_or_else(|_| Err(io::Error::other("supervisor panicked")));
                (a.name.clone(), r)
            })
            .collect()
    })
}
