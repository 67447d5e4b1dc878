use std::collections::{BTreeMap, VecDeque};
use std::io;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use chrono::{Duration, NaiveTime, TimeZone, Utc};
use chrono_tz::Tz;
use parking_lot::Mutex;

use super::*;
use crate::agent::{default_timezone, next_fire_instant, AgentEvent, Clock, CycleKind, SimClock};
use crate::model::{Region, SubmissionId};

fn thirteen() -> FleetSpec {
    FleetSpec {
        regions: [Region::Australia, Region::Canada, Region::UnitedKingdom, Region::UnitedStates]
            .into_iter()
            .map(|r| (r, 3))
            .collect(),
        extras: vec![ExtraAgent { region: Region::UnitedStates, condition: None }],
        ..Default::default()
    }
}

#[test]
fn three_per_region_plus_one_is_thirteen() {
    let plan = plan_fleet(&thirteen());
    assert_eq!(plan.len(), 13);
    let mut offsets: Vec<u32> = plan.iter().map(|a| a.settings.stagger_seconds).collect();
    assert!(offsets.iter().all(|o| *o < STAGGER_WINDOW_SECONDS));
    offsets.sort();
    offsets.dedup();
    assert_eq!(offsets.len(), 13);
    let mut dirs: Vec<_> = plan.iter().map(|a| a.state_dir.clone()).collect();
    dirs.sort();
    dirs.dedup();
    assert_eq!(dirs.len(), 13);
    assert_eq!(plan.iter().filter(|a| a.region == Region::UnitedStates).count(), 4);
    assert!(plan.iter().all(|a| a.settings.retention && a.settings.signals.is_empty()));
}

#[test]
fn empty_spec_plans_nothing() {
    assert!(plan_fleet(&FleetSpec::default()).is_empty());
}

#[test]
fn same_region_fires_are_a_minute_apart() {
    for n in 1..=14u32 {
        let spec = FleetSpec {
            regions: [Region::UnitedKingdom, Region::Australia, Region::Canada]
                .into_iter()
                .map(|r| (r, n))
                .collect(),
            ..Default::default()
        };
        let plan = plan_fleet(&spec);
        let mut by_region: BTreeMap<Region, Vec<_>> = BTreeMap::new();
        for agent in &plan {
            let tz: Tz = default_timezone(agent.region).parse().unwrap();
            let stagger = Duration::seconds(i64::from(agent.settings.stagger_seconds));
            let mut t = Utc.with_ymd_and_hms(2019, 3, 30, 0, 0, 0).unwrap();
            let mut fires = Vec::new();
            for _ in 0..18 {
                t = next_fire_instant(t, &tz, stagger);
                fires.push(t);
            }
            by_region.entry(agent.region).or_default().push(fires);
        }
        for agents in by_region.values() {
            for (i, a) in agents.iter().enumerate() {
                for b in &agents[i + 1..] {
                    for x in a {
                        for y in b {
                            assert!((*x - *y).num_seconds().abs() >= 60, "n={n}: {x} vs {y}");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn backoff_doubles_up_to_the_cap() {
    let p = SupervisorPolicy::default();
    let secs: Vec<i64> = (1..=10).map(|n| p.backoff(n).num_seconds()).collect();
    assert_eq!(secs, vec![10, 20, 40, 80, 160, 320, 600, 600, 600, 600]);
}

#[derive(Debug, Clone)]
enum Step {
    CycleStart,
    CycleEnd,
    Rss(u64),
    Exit(i32),
}

/// Plays a script of timed steps per launch; a launch with no script left
/// runs idle forever.
#[derive(Clone)]
struct ScriptedLauncher {
    clock: SimClock,
    scripts: Arc<Mutex<VecDeque<Vec<(i64, Step)>>>>,
    launches: Arc<Mutex<Vec<chrono::DateTime<Utc>>>>,
}

struct ScriptedProcess {
    clock: SimClock,
    started: chrono::DateTime<Utc>,
    steps: VecDeque<(i64, Step)>,
    rss: Option<u64>,
}

impl AgentProcess for ScriptedProcess {
    fn poll(&mut self) -> ProcessPoll {
        let elapsed = (self.clock.now() - self.started).num_seconds();
        let mut out = ProcessPoll::default();
        while self.steps.front().is_some_and(|(at, _)| *at <= elapsed) {
            let at = self.clock.now();
            match self.steps.pop_front().unwrap().1 {
                Step::CycleStart => out.events.push(AgentEvent::CycleStarted { kind: CycleKind::Scheduled, at }),
                Step::CycleEnd => out.events.push(AgentEvent::CycleFinished {
                    kind: CycleKind::Scheduled,
                    at,
                    submission_id: SubmissionId::from_u128(1),
                    snapshots: 14,
                    blocked: 0,
                    failed: 0,
                }),
                Step::Rss(b) => self.rss = Some(b),
                Step::Exit(code) => {
                    out.exited = Some(Some(code));
                    break;
                }
            }
        }
        out.rss_bytes = self.rss;
        out
    }

    fn terminate(&mut self) {}
}

impl Launcher for ScriptedLauncher {
    type Process = ScriptedProcess;
    fn launch(&mut self, _: &PlannedAgent) -> io::Result<ScriptedProcess> {
        self.launches.lock().push(self.clock.now());
        Ok(ScriptedProcess {
            clock: self.clock.clone(),
            started: self.clock.now(),
            steps: self.scripts.lock().pop_front().unwrap_or_default().into(),
            rss: None,
        })
    }
}

fn harness(scripts: Vec<Vec<(i64, Step)>>) -> (SimClock, ScriptedLauncher, HealthLog, SharedBuffer, PlannedAgent) {
    let clock = SimClock::new(Utc.with_ymd_and_hms(2019, 6, 3, 12, 0, 0).unwrap());
    let launcher = ScriptedLauncher {
        clock: clock.clone(),
        scripts: Arc::new(Mutex::new(scripts.into())),
        launches: Arc::default(),
    };
    let buf = SharedBuffer::default();
    let log = HealthLog::new(buf.clone());
    let agent = plan_fleet(&FleetSpec {
        regions: [(Region::UnitedKingdom, 1)].into_iter().collect(),
        ..Default::default()
    })
    .remove(0);
    (clock, launcher, log, buf, agent)
}

fn events(buf: &SharedBuffer) -> Vec<HealthEvent> {
    read_health_log(&buf.contents()).into_iter().map(|r| r.event).collect()
}

fn quiet_policy() -> SupervisorPolicy {
    SupervisorPolicy {
        daily_restart: None,
        ..Default::default()
    }
}

#[test]
fn crash_is_restarted_after_backoff() {
    let (clock, mut launcher, log, buf, agent) = harness(vec![vec![(5, Step::Exit(3))]]);
    let until = clock.now() + Duration::minutes(2);
    let summary = supervise_agent(&agent, &mut launcher, &quiet_policy(), &clock, &log, &AtomicBool::new(false), Some(until)).unwrap();
    assert_eq!(summary.launches, 2);
    assert_eq!(summary.failures, 1);
    assert_eq!(
        events(&buf),
        vec![
            HealthEvent::Launched { attempt: 1 },
            HealthEvent::Exited { code: Some(3) },
            HealthEvent::RestartScheduled { failures: 1, delay_seconds: 10 },
            HealthEvent::Launched { attempt: 2 },
            HealthEvent::Stopped,
        ]
    );
    let launches = launcher.launches.lock();
    assert_eq!((launches[1] - launches[0]).num_seconds(), 15);
}

#[test]
fn ten_consecutive_crashes_give_up() {
    let (clock, mut launcher, log, buf, agent) = harness(vec![vec![(1, Step::Exit(1))]; 12]);
    let summary = supervise_agent(&agent, &mut launcher, &quiet_policy(), &clock, &log, &AtomicBool::new(false), None).unwrap();
    assert!(summary.gave_up);
    assert_eq!(summary.launches, 10);
    assert_eq!(events(&buf).last(), Some(&HealthEvent::GaveUp { failures: 10 }));
    let delays: Vec<u64> = events(&buf)
        .into_iter()
        .filter_map(|e| match e {
            HealthEvent::RestartScheduled { delay_seconds, .. } => Some(delay_seconds),
            _ => None,
        })
        .collect();
    assert_eq!(delays, vec![10, 20, 40, 80, 160, 320, 600, 600, 600]);
}

#[test]
fn a_finished_cycle_resets_the_failure_count() {
    let mut scripts = vec![vec![(1, Step::Exit(1))]; 9];
    scripts.push(vec![(1, Step::CycleStart), (60, Step::CycleEnd), (61, Step::Exit(1))]);
    scripts.extend(vec![vec![(1, Step::Exit(1))]; 3]);
    let (clock, mut launcher, log, _, agent) = harness(scripts);
    let until = clock.now() + Duration::hours(3);
    let summary = supervise_agent(&agent, &mut launcher, &quiet_policy(), &clock, &log, &AtomicBool::new(false), Some(until)).unwrap();
    assert!(!summary.gave_up);
    assert_eq!(summary.failures, 13);
}

#[test]
fn memory_breach_waits_for_the_cycle_boundary() {
    let (clock, mut launcher, log, buf, agent) = harness(vec![vec![
        (10, Step::CycleStart),
        (20, Step::Rss(900 << 20)),
        (50, Step::CycleEnd),
    ]]);
    let policy = SupervisorPolicy {
        memory_limit_bytes: Some(512 << 20),
        ..quiet_policy()
    };
    let until = clock.now() + Duration::minutes(5);
    let summary = supervise_agent(&agent, &mut launcher, &policy, &clock, &log, &AtomicBool::new(false), Some(until)).unwrap();
    assert_eq!(summary.proactive_restarts, 1);
    assert_eq!(summary.failures, 0);
    let ev = events(&buf);
    let breach = ev.iter().position(|e| matches!(e, HealthEvent::MemoryBreach { .. })).unwrap();
    let end = ev.iter().position(|e| matches!(e, HealthEvent::CycleFinished { .. })).unwrap();
    let restart = ev
        .iter()
        .position(|e| *e == HealthEvent::ProactiveRestart { reason: RestartReason::Memory })
        .unwrap();
    assert!(breach < end && end < restart);
    assert!(ev[breach..end].contains(&HealthEvent::RestartDeferred { reason: RestartReason::Memory }));
    let launches = launcher.launches.lock();
    assert_eq!(launches.len(), 2);
    assert_eq!((launches[1] - launches[0]).num_seconds(), 50);
}

#[test]
fn daily_restart_happens_at_local_time() {
    let (clock, mut launcher, log, _, agent) = harness(vec![]);
    let policy = SupervisorPolicy {
        daily_restart: NaiveTime::from_hms_opt(3, 0, 0),
        poll_interval_ms: 30_000,
        ..Default::default()
    };
    let until = clock.now() + Duration::days(3);
    let summary = supervise_agent(&agent, &mut launcher, &policy, &clock, &log, &AtomicBool::new(false), Some(until)).unwrap();
    assert_eq!(summary.proactive_restarts, 3);
    let tz: Tz = default_timezone(Region::UnitedKingdom).parse().unwrap();
    for t in launcher.launches.lock().iter().skip(1) {
        let local = t.with_timezone(&tz).time();
        assert_eq!(local, NaiveTime::from_hms_opt(3, 0, 0).unwrap());
    }
}

#[test]
fn fleet_log_is_ordered_per_agent() {
    let clock = SimClock::new(Utc.with_ymd_and_hms(2019, 6, 3, 12, 0, 0).unwrap());
    let launcher = ScriptedLauncher {
        clock: clock.clone(),
        scripts: Arc::new(Mutex::new(vec![vec![(2, Step::Exit(1))]; 40].into())),
        launches: Arc::default(),
    };
    let buf = SharedBuffer::default();
    let log = HealthLog::new(buf.clone());
    let plan = plan_fleet(&thirteen());
    let until = clock.now() + Duration::hours(2);
    let results = run_fleet(&plan, &launcher, &quiet_policy(), &clock, &log, &AtomicBool::new(false), Some(until));
    assert!(results.iter().all(|(_, r)| r.is_ok()));
    let records = read_health_log(&buf.contents());
    let mut last: BTreeMap<String, u64> = BTreeMap::new();
    for r in &records {
        let prev = last.insert(r.agent.clone(), r.seq).unwrap_or(0);
        assert_eq!(r.seq, prev + 1);
    }
    assert_eq!(last.len(), 13);
}

#[test]
fn reopened_log_continues_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("health.log");
    let at = Utc.with_ymd_and_hms(2019, 6, 3, 12, 0, 0).unwrap();
    HealthLog::open(&path).unwrap().append("uk-01", at, HealthEvent::Stopped).unwrap();
    let r = HealthLog::open(&path).unwrap().append("uk-01", at, HealthEvent::Stopped).unwrap();
    assert_eq!(r.seq, 2);
    assert_eq!(read_health_log(&std::fs::read_to_string(&path).unwrap()).len(), 2);
}
