//! Subcommand definitions and their implementations.

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Duration, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serpaudit_core::agent::{
    register_agent, default_timezone, Agent, AgentEvent, AgentSettings, DelayRange, StateDir, SystemClock,
    TargetMode, CycleKind,
};
use serpaudit_core::analysis::{analyze, emit_report, parse_taxonomy, AnalysisOptions, HostSource, KwUnit, KwVariable};
use serpaudit_core::corpus::read_corpus;
use serpaudit_core::fleet::{plan_fleet, run_fleet, FleetSpec, HealthLog, PlannedAgent, SupervisorPolicy};
use serpaudit_core::mock_ise::{MockConfig, MockEngine};
use serpaudit_core::query::QueryTemplates;
use serpaudit_core::server::{CollectionServer, ConfigBundle, GroupTable};
use serpaudit_core::{ClientKind, Condition, ExtractionRuleSet, Region};

use crate::client::{fetch_export, HttpFetcher, HttpServerApi};
use crate::http::{collection_router, mock_router, serve, spawn_background};
use crate::launcher::ProcessLauncher;

#[derive(Debug, Parser)]
#[command(name = "serpaudit", version, about = "Crowdsourced audit of search-engine advertising")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the collection server.
    Server(ServerArgs),
    /// Run the mock search engine.
    MockIse(MockArgs),
    #[command(subcommand)]
    Agent(AgentCommand),
    #[command(subcommand)]
    Fleet(FleetCommand),
    /// Analyse an exported corpus.
    Analyze(AnalyzeArgs),
    /// Download a corpus export from a running server.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ServerArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// SQLite database file; created if missing.
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long, env = "SERPAUDIT_ADMIN_TOKEN")]
    pub admin_token: String,
    /// Group table (TOML); the bundled table if omitted.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Extraction rules (TOML) to publish; the bundled rules if omitted.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Query template file to publish.
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MockArgs {
    #[arg(long, default_value = "127.0.0.1:8081")]
    pub listen: SocketAddr,
    /// Inventory and web graph (TOML); the bundled config if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub block_rate: Option<f64>,
    #[arg(long)]
    pub no_targeting: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Mock,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegionArg {
    Au,
    Ca,
    Uk,
    Us,
}

impl From<RegionArg> for Region {
    fn from(r: RegionArg) -> Region {
        match r {
            RegionArg::Au => Region::Australia,
            RegionArg::Ca => Region::Canada,
            RegionArg::Uk => Region::UnitedKingdom,
            RegionArg::Us => Region::UnitedStates,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum AgentCommand {
    /// Register with the server and write a profile.
    Register(RegisterArgs),
    /// Run scheduled cycles from a profile.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Survey answers as a JSON or TOML table of form fields.
    #[arg(long)]
    pub survey: PathBuf,
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub server: String,
    #[arg(long, default_value = "agent/agent.json")]
    pub profile: PathBuf,
    /// Defaults to the survey's country of residence.
    #[arg(long, value_enum)]
    pub region: Option<RegionArg>,
    #[arg(long, value_enum, default_value = "mock")]
    pub mode: Mode,
    #[arg(long, default_value = "http://127.0.0.1:8081")]
    pub mock_url: String,
    #[arg(long)]
    pub donor: bool,
    #[arg(long)]
    pub retain_raw: bool,
    /// Conditions the mock engine may target this agent by, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub signals: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub stagger_seconds: u32,
    /// Pause between queries, as MIN-MAX milliseconds.
    #[arg(long)]
    pub delay_ms: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub server: String,
    #[arg(long, value_enum)]
    pub region: RegionArg,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long)]
    pub retain_raw: bool,
    #[arg(long, default_value = "http://127.0.0.1:8081")]
    pub mock_url: String,
    /// Pause between queries, as MIN-MAX milliseconds.
    #[arg(long)]
    pub delay_ms: Option<String>,
    /// Run a single cycle, deliver, and exit.
    #[arg(long)]
    pub once: bool,
    /// Stop before this instant (RFC 3339).
    #[arg(long)]
    pub until: Option<DateTime<Utc>>,
    /// Print agent events to stdout as JSON lines.
    #[arg(long)]
    pub events: bool,
}

#[derive(Debug, Subcommand)]
pub enum FleetCommand {
    /// Expand a fleet spec into per-agent plans.
    Plan(PlanArgs),
    /// Register and supervise every planned agent.
    Run(FleetRunArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Write the plan here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FleetRunArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub server: String,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Mock engine base URL; one is started in-process if omitted.
    #[arg(long)]
    pub mock_url: Option<String>,
    #[arg(long, default_value = "fleet-health.log")]
    pub health_log: PathBuf,
    /// Supervisor policy (TOML); defaults if omitted.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Stop after this many seconds.
    #[arg(long)]
    pub duration_secs: Option<u64>,
    /// Pause between queries for newly registered agents, as MIN-MAX milliseconds.
    #[arg(long)]
    pub delay_ms: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KwOn {
    CriticalFraction,
    AdsPerEntry,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KwUnitArg {
    Donor,
    Entry,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HostSourceArg {
    Landing,
    DisplayName,
    LandingThenName,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub taxonomy: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Study groups to include, comma separated; all if omitted.
    #[arg(long, value_delimiter = ',')]
    pub groups: Vec<u32>,
    #[arg(long, default_value = "critical_fraction", value_parser = parse_kw_on)]
    pub kw_on: KwOn,
    #[arg(long, value_enum, default_value = "donor")]
    pub kw_unit: KwUnitArg,
    #[arg(long, value_enum, default_value = "landing-then-name")]
    pub host_source: HostSourceArg,
    #[arg(long, default_value_t = 20)]
    pub top_k: usize,
}

fn parse_kw_on(s: &str) -> Result<KwOn, String> {
    match s.replace('_', "-").as_str() {
        "critical-fraction" => Ok(KwOn::CriticalFraction),
        "ads-per-entry" => Ok(KwOn::AdsPerEntry),
        other => Err(format!("expected critical_fraction or ads_per_entry, got {other}")),
    }
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub server: String,
    #[arg(long, env = "SERPAUDIT_ADMIN_TOKEN")]
    pub token: String,
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Server(a) => server(a),
        Command::MockIse(a) => mock_ise(a),
        Command::Agent(AgentCommand::Register(a)) => agent_register(a),
        Command::Agent(AgentCommand::Run(a)) => agent_run(a),
        Command::Fleet(FleetCommand::Plan(a)) => fleet_plan(a),
        Command::Fleet(FleetCommand::Run(a)) => fleet_run(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Export(a) => export(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Reads a JSON or TOML document, by extension.
fn read_doc<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read(path)?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn parse_delay(raw: &str) -> Result<DelayRange> {
    let (lo, hi) = raw.split_once('-').context("delay must be MIN-MAX")?;
    let d = DelayRange {
        min_ms: lo.trim().parse()?,
        max_ms: hi.trim().parse()?,
    };
    if d.min_ms > d.max_ms {
        bail!("delay minimum exceeds maximum");
    }
    Ok(d)
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn server(a: ServerArgs) -> Result<()> {
    if a.admin_token.trim().is_empty() {
        bail!("an admin token is required for exports");
    }
    let table = match &a.groups {
        Some(p) => GroupTable::from_toml(&read(p)?)?,
        None => GroupTable::bundled(),
    };
    let mut bundle = ConfigBundle::bundled();
    if let Some(p) = &a.rules {
        bundle.rules = ExtractionRuleSet::from_toml(&read(p)?)?;
        bundle.version = bundle.rules.version;
    }
    if let Some(p) = &a.templates {
        let text = read(p)?;
        QueryTemplates::parse(&text)?;
        bundle.templates = text;
    }
    let server = Arc::new(CollectionServer::open(&a.db, table, bundle)?);
    runtime()?.block_on(serve(collection_router(server, &a.admin_token), a.listen))
}

fn mock_engine(config: Option<&Path>, block_rate: Option<f64>, no_targeting: bool) -> Result<MockEngine> {
    let mut cfg = match config {
        Some(p) => MockConfig::from_toml(&read(p)?)?,
        None => MockConfig::bundled(),
    };
    if let Some(r) = block_rate {
        cfg.engine.block_rate = r;
    }
    if no_targeting {
        cfg.engine.targeting_enabled = false;
    }
    Ok(MockEngine::new(cfg)?)
}

fn mock_ise(a: MockArgs) -> Result<()> {
    let engine = Arc::new(mock_engine(a.config.as_deref(), a.block_rate, a.no_targeting)?);
    runtime()?.block_on(serve(mock_router(engine), a.listen))
}

fn target(mode: Mode, mock_url: &str) -> TargetMode {
    match mode {
        Mode::Mock => TargetMode::Mock { url: mock_url.to_string() },
        Mode::Live => TargetMode::Live,
    }
}

fn agent_register(a: RegisterArgs) -> Result<()> {
    let survey: BTreeMap<String, String> = read_doc(&a.survey)?;
    let region = match a.region {
        Some(r) => r.into(),
        None => {
            let residence = survey.get("residence").context("survey has no residence and no --region given")?;
            serde_json::from_value::<Region>(serde_json::Value::String(residence.to_lowercase()))
                .ok()
                .filter(|r| *r != Region::Other)
                .with_context(|| format!("cannot derive a region from residence {residence:?}; pass --region"))?
        }
    };
    let signals = a
        .signals
        .iter()
        .map(|s| serde_json::from_value::<Condition>(serde_json::Value::String(s.clone())).with_context(|| format!("unknown condition {s}")))
        .collect::<Result<_>>()?;
    let settings = AgentSettings {
        server_url: a.server.clone(),
        region,
        timezone: None,
        target_mode: target(a.mode, &a.mock_url),
        retention: a.retain_raw,
        plugin_version: env!("CARGO_PKG_VERSION").to_string(),
        ui_language: "en".into(),
        signals,
        stagger_seconds: a.stagger_seconds,
        delay: a.delay_ms.as_deref().map(parse_delay).transpose()?.unwrap_or_default(),
        seed: a.seed,
    };
    let kind = if a.donor { ClientKind::Donor } else { ClientKind::Baseline };
    let state = StateDir::from_profile(&a.profile)?;
    if state.load_config()?.is_some() {
        bail!("{} already holds a registered profile", a.profile.display());
    }
    let config = register_agent(&mut HttpServerApi::new(&a.server), &settings, survey, kind)?;
    state.save_config(&config)?;
    println!(
        "{}",
        serde_json::json!({
            "participant_id": config.participant_id,
            "study_id": config.study_id,
            "terms": config.terms.len(),
            "profile": a.profile,
        })
    );
    Ok(())
}

fn agent_run(a: RunArgs) -> Result<()> {
    let state = StateDir::from_profile(&a.profile)?;
    let mut config = state
        .load_config()?
        .with_context(|| format!("no profile at {}; run `agent register` first", a.profile.display()))?;
    let region: Region = a.region.into();
    if config.region != region {
        if config.timezone == default_timezone(config.region) {
            config.timezone = default_timezone(region).to_string();
        }
        config.region = region;
    }
    config.server_url = a.server.clone();
    config.target_mode = target(a.mode, &a.mock_url);
    config.retention = config.retention || a.retain_raw;
    if let Some(d) = &a.delay_ms {
        config.delay = parse_delay(d)?;
    }
    state.save_config(&config)?;

    let clock = SystemClock;
    let mut agent = Agent::with_state(state, &clock, HttpFetcher::new(), HttpServerApi::new(&a.server))?;
    let print = a.events;
    agent.on_event(move |e: &AgentEvent| {
        if print {
            if let Ok(line) = serde_json::to_string(e) {
                println!("{line}");
            }
        } else {
            tracing::info!(event = ?e);
        }
    });
    if a.once {
        agent.cycle(CycleKind::Startup)?;
        agent.deliver()?;
        if agent.queued() > 0 {
            tracing::warn!(queued = agent.queued(), "submissions left queued for the next contact");
        }
        return Ok(());
    }
    let stats = agent.run(a.until, &AtomicBool::new(false))?;
    tracing::info!(?stats, "agent stopped");
    Ok(())
}

fn fleet_plan(a: PlanArgs) -> Result<()> {
    let spec: FleetSpec = read_doc(&a.spec)?;
    let plan = plan_fleet(&spec);
    let text = serde_json::to_string_pretty(&plan)?;
    match &a.out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn fleet_run(a: FleetRunArgs) -> Result<()> {
    if a.mode != Mode::Mock {
        bail!("fleet runs are supported against the mock engine only");
    }
    let plan: Vec<PlannedAgent> = read_doc(&a.plan)?;
    let policy: SupervisorPolicy = match &a.policy {
        Some(p) => read_doc(p)?,
        None => SupervisorPolicy::default(),
    };
    let mock_url = match &a.mock_url {
        Some(u) => u.clone(),
        None => {
            let engine = Arc::new(mock_engine(None, None, false)?);
            let addr = spawn_background(mock_router(engine), "127.0.0.1:0".parse()?)?;
            format!("http://{addr}")
        }
    };
    let delay = a.delay_ms.as_deref().map(parse_delay).transpose()?;
    let mut api = HttpServerApi::new(&a.server);
    for agent in &plan {
        let state = StateDir::open(&agent.state_dir)?;
        if state.load_config()?.is_some() {
            continue;
        }
        let mut settings = agent.settings.clone();
        settings.server_url = a.server.clone();
        settings.target_mode = TargetMode::Mock { url: mock_url.clone() };
        if let Some(d) = delay {
            settings.delay = d;
        }
        let config = register_agent(&mut api, &settings, agent.survey.clone(), ClientKind::Baseline)
            .with_context(|| format!("registering {}", agent.name))?;
        state.save_config(&config)?;
        tracing::info!(agent = %agent.name, study = config.study_id, "registered");
    }

    let launcher = ProcessLauncher {
        exe: std::env::current_exe()?,
        server_url: a.server.clone(),
        mock_url: Some(mock_url),
    };
    let log = HealthLog::open(&a.health_log).with_context(|| format!("opening {}", a.health_log.display()))?;
    let until = a.duration_secs.map(|s| Utc::now() + Duration::seconds(s as i64));
    let results = run_fleet(&plan, &launcher, &policy, &SystemClock, &log, &AtomicBool::new(false), until);
    let mut down = Vec::new();
    for (name, r) in results {
        match r {
            Ok(s) if s.gave_up => down.push(name),
            Ok(s) => tracing::info!(agent = %name, ?s, "supervision ended"),
            Err(e) => {
                tracing::error!(agent = %name, error = %e, "supervisor failed");
                down.push(name);
            }
        }
    }
    if !down.is_empty() {
        bail!("agents down: {}", down.join(", "));
    }
    Ok(())
}

fn analyze_cmd(a: AnalyzeArgs) -> Result<()> {
    let corpus = read_corpus(fs::File::open(&a.corpus).with_context(|| format!("opening {}", a.corpus.display()))?)?;
    let taxonomy = parse_taxonomy(fs::File::open(&a.taxonomy).with_context(|| format!("opening {}", a.taxonomy.display()))?)?;
    let options = AnalysisOptions {
        groups: (!a.groups.is_empty()).then(|| a.groups.clone()),
        host_source: match a.host_source {
            HostSourceArg::Landing => HostSource::Landing,
            HostSourceArg::DisplayName => HostSource::DisplayName,
            HostSourceArg::LandingThenName => HostSource::LandingThenName,
        },
        kw_variable: match a.kw_on {
            KwOn::CriticalFraction => KwVariable::CriticalFraction,
            KwOn::AdsPerEntry => KwVariable::AdsPerEntry,
        },
        kw_unit: match a.kw_unit {
            KwUnitArg::Donor => KwUnit::Donor,
            KwUnitArg::Entry => KwUnit::Entry,
        },
        top_k: a.top_k,
    };
    let report = analyze(&corpus, &taxonomy, &options)?;
    for path in emit_report(&report, &a.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let text = fetch_export(&a.server, &a.token, a.from.as_deref(), a.to.as_deref(), a.groups.as_deref())?;
    match &a.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}
