//! In-process wiring of agents, the collection server and the mock engine
//! under a simulated clock.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, Duration, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::agent::{
    default_timezone, register_agent, Agent, AgentConfig, AgentError, AgentSettings, ApiError,
    Clock, DelayRange, FetchError, Fetcher, ServerApi, SimClock, SubmissionQueue, TargetMode,
};
use crate::analysis::{analyze, AnalysisOptions, KwUnit, KwVariable, Report};
use crate::corpus::read_corpus;
use crate::mock_ise::{MockConfig, MockEngine, MockQuery};
use crate::model::{ClientKind, Condition, Region, Submission, SurveyResponse};
use crate::server::{
    CollectionServer, ConfigBundle, ConfigReply, ExportFilter, GroupTable, RegisterRequest,
    RegisterResponse, ServerError, SubmitAck,
};

/// A [`CollectionServer`] reached in-process, with a switch to make it unreachable.
#[derive(Clone)]
pub struct LocalServer<C: Clock + Clone> {
    pub server: Arc<CollectionServer>,
    clock: C,
    available: Arc<AtomicBool>,
    submit_attempts: Arc<AtomicU64>,
}

impl<C: Clock + Clone> LocalServer<C> {
    pub fn new(server: Arc<CollectionServer>, clock: C) -> Self {
        LocalServer {
            server,
            clock,
            available: Arc::new(AtomicBool::new(true)),
            submit_attempts: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn set_available(&self, up: bool) {
        self.available.store(up, Ordering::SeqCst);
    }

    pub fn submit_attempts(&self) -> u64 {
        self.submit_attempts.load(Ordering::SeqCst)
    }

    fn check(&self) -> Result<(), ApiError> {
        if self.available.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(ApiError::Unreachable("connection refused".into()))
        }
    }
}

fn rejected(e: ServerError) -> ApiError {
    match e {
        ServerError::Storage(e) => ApiError::Unreachable(e.to_string()),
        other => ApiError::Rejected(other.to_string()),
    }
}

impl<C: Clock + Clone> ServerApi for LocalServer<C> {
    fn register(&mut self, req: &RegisterRequest) -> Result<RegisterResponse, ApiError> {
        self.check()?;
        self.server.register(req, self.clock.now()).map_err(rejected)
    }

    fn submit(&mut self, sub: &Submission) -> Result<SubmitAck, ApiError> {
        self.submit_attempts.fetch_add(1, Ordering::SeqCst);
        self.check()?;
        // round-trip through the wire encoding, as a remote server would see it
        let wire = serde_json::to_string(sub).map_err(|e| ApiError::Rejected(e.to_string()))?;
        let sub: Submission = serde_json::from_str(&wire).map_err(|e| ApiError::Rejected(e.to_string()))?;
        self.server.ingest(&sub).map_err(rejected)
    }

    fn config(&mut self, client_version: u64) -> Result<Option<ConfigBundle>, ApiError> {
        self.check()?;
        Ok(match self.server.serve_config(client_version) {
            ConfigReply::Update(b) => Some(b),
            ConfigReply::NotModified => None,
        })
    }
}

/// Answers search URLs from an in-process [`MockEngine`].
#[derive(Clone)]
pub struct MockFetcher {
    engine: Arc<MockEngine>,
}

impl MockFetcher {
    pub fn new(engine: Arc<MockEngine>) -> Self {
        MockFetcher { engine }
    }
}

/// Reads a mock engine request from its URL's query string.
pub fn mock_query_from_url(raw: &str) -> Option<MockQuery> {
    let url = url::Url::parse(raw).ok()?;
    let pairs: BTreeMap<String, String> = url.query_pairs().into_owned().collect();
    Some(MockQuery {
        term: pairs.get("q")?.clone(),
        tld: pairs.get("tld").cloned().unwrap_or_else(|| "com".into()),
        signals: pairs
            .get("signals")
            .map(|s| s.split(',').filter_map(|c| c.parse().ok()).collect())
            .unwrap_or_default(),
        seed: pairs.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0),
    })
}

impl Fetcher for MockFetcher {
    fn fetch(&mut self, url: &str) -> Result<String, FetchError> {
        let q = mock_query_from_url(url).ok_or_else(|| FetchError::Transport(format!("bad url {url}")))?;
        Ok(self.engine.search(&q).page)
    }
}

/// A survey answered the same way as the form's defaults, with the given
/// condition status and residence.
pub fn survey_for(condition: Option<Condition>, residence: Region) -> BTreeMap<String, String> {
    use crate::model::{AffectedStatus, AgeBand, City, Gender, UsageFrequency};
    let status = |c: Condition| {
        if condition == Some(c) {
            AffectedStatus::Patient
        } else {
            AffectedStatus::No
        }
    };
    SurveyResponse {
        pd_status: status(Condition::ParkinsonsDisease),
        ms_status: status(Condition::MultipleSclerosis),
        db_status: status(Condition::Diabetes),
        researcher: false,
        residence,
        age_band: AgeBand::From50To59,
        gender: Gender::NotSaid,
        device_use: UsageFrequency::DailyLe2,
        search_use: UsageFrequency::DailyLe2,
        paid_or_inquired_sct: false,
        city: City::NotSaid,
    }
    .to_field_map()
}

fn settings(region: Region, signals: &[Condition], seed: u64) -> AgentSettings {
    AgentSettings {
        server_url: "local".into(),
        region,
        timezone: None,
        target_mode: TargetMode::Mock {
            url: "http://mock.local/".into(),
        },
        retention: false,
        plugin_version: "sim".into(),
        ui_language: "en".into(),
        signals: signals.iter().copied().collect(),
        stagger_seconds: 0,
        delay: DelayRange::default(),
        seed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub region: Region,
    /// Local wall-clock start.
    pub start_local: NaiveDateTime,
    pub days: u32,
    /// Offsets from the start at which the agent process is restarted.
    pub restarts: Vec<Duration>,
    /// Spans (offset from start, length) during which the server is unreachable.
    pub outages: Vec<(Duration, Duration)>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutcome {
    pub process_starts: u64,
    pub scheduled_cycles: u64,
    pub startup_cycles: u64,
    pub snapshots: u64,
    pub stored_snapshots: u64,
    pub exported_rows: u64,
    pub queued_at_end: usize,
    pub elapsed_ms: u128,
}

/// One agent, one server and one mock engine over a simulated span.
pub fn run_simulation(spec: &SimulationSpec) -> Result<SimulationOutcome, AgentError> {
    let wall = Instant::now();
    let tz: chrono_tz::Tz = default_timezone(spec.region).parse().expect("known zone");
    let start = tz
        .from_local_datetime(&spec.start_local)
        .earliest()
        .ok_or_else(|| AgentError::Config("start time does not exist locally".into()))?
        .with_timezone(&Utc);
    let end = start + Duration::days(i64::from(spec.days));
    let clock = SimClock::new(start);
    let server = Arc::new(
        CollectionServer::in_memory(GroupTable::bundled(), ConfigBundle::bundled())
            .map_err(|e| AgentError::Config(e.to_string()))?,
    );
    let engine = Arc::new(MockEngine::new(MockConfig::bundled()).map_err(|e| AgentError::Config(e.to_string()))?);
    let mut api = LocalServer::new(Arc::clone(&server), clock.clone());
    let config = register_agent(
        &mut api,
        &settings(spec.region, &[Condition::ParkinsonsDisease], spec.seed),
        survey_for(Some(Condition::ParkinsonsDisease), spec.region),
        ClientKind::Baseline,
    )?;

    // process boundaries and outage edges, in time order
    let mut stops: Vec<DateTime<Utc>> = spec.restarts.iter().map(|d| start + *d).filter(|t| *t < end).collect();
    stops.sort();
    stops.push(end);

    let mut outcome = SimulationOutcome {
        process_starts: 0,
        scheduled_cycles: 0,
        startup_cycles: 0,
        snapshots: 0,
        stored_snapshots: 0,
        exported_rows: 0,
        queued_at_end: 0,
        elapsed_ms: 0,
    };
    let mut carried: (AgentConfig, SubmissionQueue) = (config, SubmissionQueue::in_memory());
    let outages: Vec<(DateTime<Utc>, DateTime<Utc>)> =
        spec.outages.iter().map(|(from, len)| (start + *from, start + *from + *len)).collect();
    let mut fetcher = MockFetcher::new(engine);
    for stop_at in stops {
        let (config, queue) = carried;
        let mut agent = Agent::with_queue(config, queue, &clock, fetcher, api.clone())?;
        let outage_api = api.clone();
        let outage_clock = clock.clone();
        let windows = outages.clone();
        agent.on_event(move |_| {
            let now = outage_clock.now();
            outage_api.set_available(!windows.iter().any(|(a, b)| now >= *a && now < *b));
        });
        outcome.process_starts += 1;
        let stats = agent.run(Some(stop_at), &AtomicBool::new(false))?;
        outcome.scheduled_cycles += stats.scheduled_cycles;
        outcome.startup_cycles += stats.startup_cycles;
        outcome.snapshots += stats.snapshots;
        clock.sleep_until(stop_at);
        let (config, queue, f, _) = agent.into_parts();
        fetcher = f;
        carried = (config, queue);
    }
    // a final contact once the span is over
    api.set_available(true);
    let (config, queue) = carried;
    let mut agent = Agent::with_queue(config, queue, &clock, fetcher, api.clone())?;
    agent.deliver()?;
    outcome.queued_at_end = agent.queued();

    let health = server.health().map_err(|e| AgentError::Config(e.to_string()))?;
    outcome.stored_snapshots = health.snapshots;
    let text = server
        .export_corpus(&ExportFilter::default())
        .map_err(|e| AgentError::Config(e.to_string()))?;
    outcome.exported_rows = read_corpus(text.as_bytes())
        .map_err(|e| AgentError::Config(e.to_string()))?
        .len() as u64;
    outcome.elapsed_ms = wall.elapsed().as_millis();
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrillSpec {
    pub targeting_enabled: bool,
    /// Cycles per cohort.
    pub cycles: usize,
    /// Agents per cohort; cycles are split evenly between them.
    pub agents: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrillOutcome {
    pub affected_group: u32,
    pub control_group: u32,
    pub affected_ads_per_entry: f64,
    pub control_ads_per_entry: f64,
    pub p_value: Option<f64>,
    pub report: Report,
}

/// Two cohorts crawl the same PD query set; only the affected cohort carries
/// the PD signal. The exported corpus is analysed per entry on ad counts.
pub fn run_targeting_drill(spec: &DrillSpec) -> Result<DrillOutcome, AgentError> {
    let start = Utc.with_ymd_and_hms(2019, 6, 3, 9, 0, 0).unwrap();
    let clock = SimClock::new(start);
    let server = Arc::new(
        CollectionServer::in_memory(GroupTable::bundled(), ConfigBundle::bundled())
            .map_err(|e| AgentError::Config(e.to_string()))?,
    );
    let mut mock = MockConfig::bundled();
    mock.engine.targeting_enabled = spec.targeting_enabled;
    let engine = Arc::new(MockEngine::new(mock).map_err(|e| AgentError::Config(e.to_string()))?);
    let api = LocalServer::new(Arc::clone(&server), clock.clone());

    let agents = spec.agents.max(1);
    let mut groups = [0u32; 2];
    for (cohort, (condition, signals)) in [
        (Some(Condition::ParkinsonsDisease), vec![Condition::ParkinsonsDisease]),
        (None, vec![]),
    ]
    .into_iter()
    .enumerate()
    {
        for a in 0..agents {
            let seed = crate::mock_ise::request_seed(spec.seed, &[&cohort.to_string(), &a.to_string()]);
            let mut api = api.clone();
            let config = register_agent(
                &mut api,
                &settings(Region::UnitedStates, &signals, seed),
                survey_for(condition, Region::UnitedStates),
                ClientKind::Baseline,
            )?;
            groups[cohort] = config.study_id;
            let mut agent = Agent::new(config, &clock, MockFetcher::new(Arc::clone(&engine)), api)?;
            let share = spec.cycles / agents + usize::from(a < spec.cycles % agents);
            for _ in 0..share {
                agent.cycle(crate::agent::CycleKind::Scheduled)?;
                agent.deliver()?;
                clock.advance(Duration::hours(4));
            }
        }
    }

    let text = server
        .export_corpus(&ExportFilter::default())
        .map_err(|e| AgentError::Config(e.to_string()))?;
    let corpus = read_corpus(text.as_bytes()).map_err(|e| AgentError::Config(e.to_string()))?;
    let options = AnalysisOptions {
        groups: Some(groups.to_vec()),
        kw_variable: KwVariable::AdsPerEntry,
        kw_unit: KwUnit::Entry,
        ..Default::default()
    };
    let report = analyze(&corpus, &[], &options).map_err(|e| AgentError::Config(e.to_string()))?;
    let ape = |id: u32| {
        report
            .groups
            .iter()
            .find(|g| g.study_id == id)
            .map_or(0.0, |g| g.ads_per_entry.value())
    };
    Ok(DrillOutcome {
        affected_group: groups[0],
        control_group: groups[1],
        affected_ads_per_entry: ape(groups[0]),
        control_ads_per_entry: ape(groups[1]),
        p_value: report.kw.as_ref().map(|k| k.result.p_value),
        report,
    })
}
