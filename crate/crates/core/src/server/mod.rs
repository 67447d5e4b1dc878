//! Collection server: registration with atomic group assignment,
//! idempotent submission ingestion, config distribution and export.
//!
//! This is the transport-independent core; the HTTP front end maps each
//! method onto one endpoint and each [`ServerError`] onto a status code.

mod groups;
mod store;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use groups::{
    primary_condition, AssignmentState, GroupRole, GroupTable, GroupTableError, NoEligibleGroup,
    StudyGroup,
};

use crate::corpus::{export_to_string, CorpusRow};
use crate::extract::RuleError;
use crate::model::{
    validate_survey, ClientKind, Condition, ExtractionRuleSet, ModelError, ParticipantId, ParticipantRecord,
    Submission, SubmissionId, SurveyErrors,
};
use crate::query::{QueryError, QueryTemplates};
use store::{Ingested, Store};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("consent was not given")]
    ConsentMissing,
    #[error("survey rejected: {0}")]
    ValidationFailed(SurveyErrors),
    #[error(transparent)]
    NoEligibleGroup(#[from] NoEligibleGroup),
    #[error("unknown participant {0}")]
    UnknownParticipant(String),
    #[error("submission is for study {submitted} but participant is registered to {registered}")]
    StudyMismatch { registered: u32, submitted: u32 },
    #[error("malformed submission: {0}")]
    InvalidSubmission(#[from] ModelError),
    #[error("config version {offered} is not newer than {current}")]
    StaleConfig { offered: u64, current: u64 },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error("storage: {0}")]
    Storage(#[from] rusqlite::Error),
}

/// Body of `POST /register`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub consent: bool,
    /// Raw survey form fields.
    pub survey: BTreeMap<String, String>,
    pub plugin_version: String,
    pub ui_language: String,
    pub client_kind: ClientKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub participant_id: ParticipantId,
    pub study_id: u32,
    /// Condition whose query set the group crawls.
    pub condition: Condition,
    pub terms: Vec<String>,
    pub config_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub submission_id: SubmissionId,
    /// Snapshots stored under this id.
    pub stored: usize,
    pub duplicate: bool,
}

/// Everything a client needs to crawl: extraction rules and query templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigBundle {
    pub version: u64,
    pub rules: ExtractionRuleSet,
    /// Query template file contents.
    pub templates: String,
}

impl ConfigBundle {
    pub fn bundled() -> Self {
        let rules = ExtractionRuleSet::bundled();
        ConfigBundle {
            version: rules.version,
            rules,
            templates: QueryTemplates::default().to_text(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigReply {
    Update(ConfigBundle),
    NotModified,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFilter {
    /// Inclusive lower bound on `sent_at`.
    pub from: Option<DateTime<Utc>>,
    /// Exclusive upper bound on `sent_at`.
    pub to: Option<DateTime<Utc>>,
    pub groups: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub participants: u64,
    pub submissions: u64,
    pub snapshots: u64,
    pub config_version: u64,
}

pub struct CollectionServer {
    store: Store,
    table: GroupTable,
    config: RwLock<(ConfigBundle, QueryTemplates)>,
}

impl CollectionServer {
    pub fn in_memory(table: GroupTable, config: ConfigBundle) -> Result<Self, ServerError> {
        Self::with_store(Store::in_memory()?, table, config)
    }

    pub fn open(path: &Path, table: GroupTable, config: ConfigBundle) -> Result<Self, ServerError> {
        Self::with_store(Store::open(path)?, table, config)
    }

    fn with_store(store: Store, table: GroupTable, config: ConfigBundle) -> Result<Self, ServerError> {
        let templates = QueryTemplates::parse(&config.templates)?;
        Ok(CollectionServer {
            store,
            table,
            config: RwLock::new((config, templates)),
        })
    }

    pub fn group_table(&self) -> &GroupTable {
        &self.table
    }

    /// Validates the survey, assigns a group and returns the group's query terms.
    pub fn register(&self, req: &RegisterRequest, now: DateTime<Utc>) -> Result<RegisterResponse, ServerError> {
        if !req.consent {
            return Err(ServerError::ConsentMissing);
        }
        let survey = validate_survey(&req.survey).map_err(ServerError::ValidationFailed)?;
        let participant_id = ParticipantId::random();
        let record = self.store.register(
            &self.table,
            |study_id| ParticipantRecord {
                participant_id: participant_id.clone(),
                study_id,
                survey: survey.clone(),
                registered_at: now,
                client_kind: req.client_kind,
                plugin_version: req.plugin_version.clone(),
                ui_language: req.ui_language.clone(),
            },
            &survey,
        )?;
        let condition = self
            .table
            .group(record.study_id)
            .map(|g| g.condition)
            .expect("assigned groups come from the table");
        let config = self.config.read();
        let terms = config.1.compose(record.study_id, condition)?;
        Ok(RegisterResponse {
            participant_id,
            study_id: record.study_id,
            condition,
            terms: terms.terms,
            config_version: config.0.version,
        })
    }

    pub fn participant(&self, id: &ParticipantId) -> Result<Option<ParticipantRecord>, ServerError> {
        self.store.participant(id)
    }

    pub fn occupancy(&self) -> Result<AssignmentState, ServerError> {
        self.store.occupancy()
    }

    /// Stores a submission; re-sent submissions are acknowledged without storing again.
    pub fn ingest(&self, sub: &Submission) -> Result<SubmitAck, ServerError> {
        sub.validate()?;
        let (stored, duplicate) = match self.store.ingest(sub)? {
            Ingested::New(n) => (n, false),
            Ingested::Duplicate(n) => (n, true),
        };
        Ok(SubmitAck {
            submission_id: sub.submission_id.clone(),
            stored,
            duplicate,
        })
    }

    /// The current bundle if it is newer than what the client holds.
    pub fn serve_config(&self, client_version: u64) -> ConfigReply {
        let config = self.config.read();
        if config.0.version > client_version {
            ConfigReply::Update(config.0.clone())
        } else {
            ConfigReply::NotModified
        }
    }

    /// Replaces the served config. Versions only move forward.
    pub fn publish_config(&self, bundle: ConfigBundle) -> Result<(), ServerError> {
        bundle.rules.validate()?;
        let templates = QueryTemplates::parse(&bundle.templates)?;
        let mut config = self.config.write();
        if bundle.version <= config.0.version {
            return Err(ServerError::StaleConfig {
                offered: bundle.version,
                current: config.0.version,
            });
        }
        *config = (bundle, templates);
        Ok(())
    }

    pub fn export_rows(&self, filter: &ExportFilter) -> Result<Vec<CorpusRow>, ServerError> {
        self.store.export_rows(filter)
    }

    pub fn export_corpus(&self, filter: &ExportFilter) -> Result<String, ServerError> {
        Ok(export_to_string(&self.export_rows(filter)?))
    }

    pub fn health(&self) -> Result<Health, ServerError> {
        let (participants, submissions, snapshots) = self.store.counts()?;
        Ok(Health {
            status: "ok".into(),
            participants,
            submissions,
            snapshots,
            config_version: self.config.read().0.version,
        })
    }
}

#[cfg(test)]
mod tests;
