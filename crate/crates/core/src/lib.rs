//! Crowdsourced audit platform for advertising on search-engine result pages.
//!
//! The crate is organised around the data flow of an audit:
//!
//! * [`model`]: shared domain types, survey validation and host canonicalisation.
//! * [`query`]: per-study query sets, randomised crawl orders and request URLs.
//! * [`extract`]: rule-driven extraction of result pages into [`model::SerpSnapshot`]s.
//! * [`agent`]: the headless collector that runs scheduled query cycles.
//! * [`server`]: registration, group assignment, ingestion and export.
//! * [`corpus`]: the delimited export format shared by server and analysis.
//! * [`analysis`]: offline metrics over an exported corpus, including Kruskal-Wallis.
//! * [`mock_ise`]: a controllable search engine with a GSP/AdRank auction and PageRank.
//! * [`fleet`]: planning and supervision of baseline agents.
//! * [`sim`]: in-process wiring of agent, server and mock engine under a simulated clock.

pub mod agent;
pub mod analysis;
pub mod corpus;
pub mod extract;
pub mod fleet;
pub mod mock_ise;
pub mod model;
pub mod query;
pub mod server;
pub mod sim;

pub use model::{
    canonicalize_host, validate_survey, AdRecord, ClientKind, Condition, ExtractionRuleSet,
    HostCategory, HostLabelEntry, OrganicResult, ParticipantId, ParticipantRecord, Region,
    SerpSnapshot, Submission, SubmissionId, SurveyResponse, Tier, TopStory,
};
