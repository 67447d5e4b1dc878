//! SQLite persistence for participants, control-bucket occupancy and snapshots.

use std::path::Path;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use rusqlite::{params, Connection, OptionalExtension, TransactionBehavior};

use super::groups::{AssignmentState, GroupTable};
use super::{ExportFilter, ServerError};
use crate::corpus::{format_timestamp, CorpusRow};
use crate::model::{ClientKind, ParticipantId, ParticipantRecord, Submission};

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS participants (
    participant_id TEXT PRIMARY KEY,
    study_id INTEGER NOT NULL,
    survey TEXT NOT NULL,
    registered_at TEXT NOT NULL,
    client_kind TEXT NOT NULL,
    plugin_version TEXT NOT NULL,
    ui_language TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS control_buckets (
    study_id INTEGER PRIMARY KEY,
    occupancy INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS submissions (
    submission_id TEXT PRIMARY KEY,
    participant_id TEXT NOT NULL REFERENCES participants(participant_id),
    study_id INTEGER NOT NULL,
    plugin_version TEXT NOT NULL,
    sent_at TEXT NOT NULL,
    sent_at_ns INTEGER NOT NULL,
    tz_offset_minutes INTEGER NOT NULL,
    ui_language TEXT NOT NULL,
    order_seed TEXT
);
CREATE TABLE IF NOT EXISTS snapshots (
    submission_id TEXT NOT NULL REFERENCES submissions(submission_id),
    snapshot_index INTEGER NOT NULL,
    query TEXT NOT NULL,
    tld TEXT NOT NULL,
    fetched_at TEXT NOT NULL,
    blocked INTEGER NOT NULL,
    error TEXT,
    ads TEXT NOT NULL,
    results TEXT NOT NULL,
    top_stories TEXT NOT NULL,
    PRIMARY KEY (submission_id, snapshot_index)
);
CREATE INDEX IF NOT EXISTS submissions_by_time ON submissions(sent_at_ns);
";

pub(super) struct Store {
    conn: Mutex<Connection>,
}

fn nanos(t: &DateTime<Utc>) -> i64 {
    t.timestamp_nanos_opt().unwrap_or(i64::MAX)
}

fn parse_time(s: &str) -> rusqlite::Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e)))
}

fn parse_json<T: serde::de::DeserializeOwned>(s: &str) -> rusqlite::Result<T> {
    serde_json::from_str(s)
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e)))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("stored values serialise")
}

pub(super) enum Ingested {
    New(usize),
    Duplicate(usize),
}

impl Store {
    pub fn open(path: &Path) -> Result<Self, ServerError> {
        Self::init(Connection::open(path)?)
    }

    pub fn in_memory() -> Result<Self, ServerError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, ServerError> {
        conn.pragma_update(None, "foreign_keys", true)?;
        conn.execute_batch(SCHEMA)?;
        Ok(Store {
            conn: Mutex::new(conn),
        })
    }

    /// Assigns a group and persists the participant in one transaction.
    pub fn register(
        &self,
        table: &GroupTable,
        build: impl FnOnce(u32) -> ParticipantRecord,
        survey: &crate::model::SurveyResponse,
    ) -> Result<ParticipantRecord, ServerError> {
        let mut conn = self.conn.lock();
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let mut state: AssignmentState = tx
            .prepare("SELECT study_id, occupancy FROM control_buckets")?
            .query_map([], |r| Ok((r.get(0)?, r.get(1)?)))?
            .collect::<Result<_, _>>()?;
        let before = state.clone();
        let study_id = table.assign(survey, &mut state)?;
        for (id, occupancy) in &state {
            if before.get(id) != Some(occupancy) {
                tx.execute(
                    "INSERT INTO control_buckets (study_id, occupancy) VALUES (?1, ?2)
                     ON CONFLICT(study_id) DO UPDATE SET occupancy = excluded.occupancy",
                    params![id, occupancy],
                )?;
            }
        }
        let record = build(study_id);
        tx.execute(
            "INSERT INTO participants VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
            params![
                record.participant_id.as_str(),
                record.study_id,
                json(&record.survey),
                format_timestamp(&record.registered_at),
                record.client_kind.code(),
                record.plugin_version,
                record.ui_language,
            ],
        )?;
        tx.commit()?;
        Ok(record)
    }

    pub fn participant(&self, id: &ParticipantId) -> Result<Option<ParticipantRecord>, ServerError> {
        let conn = self.conn.lock();
        let row = conn
            .query_row(
                "SELECT participant_id, study_id, survey, registered_at, client_kind, plugin_version, ui_language
                 FROM participants WHERE participant_id = ?1",
                [id.as_str()],
                |r| {
                    let kind: String = r.get(4)?;
                    Ok(ParticipantRecord {
                        participant_id: id.clone(),
                        study_id: r.get(1)?,
                        survey: parse_json(&r.get::<_, String>(2)?)?,
                        registered_at: parse_time(&r.get::<_, String>(3)?)?,
                        client_kind: if kind == "baseline" { ClientKind::Baseline } else { ClientKind::Donor },
                        plugin_version: r.get(5)?,
                        ui_language: r.get(6)?,
                    })
                },
            )
            .optional()?;
        Ok(row)
    }

    pub fn occupancy(&self) -> Result<AssignmentState, ServerError> {
        let conn = self.conn.lock();
        let state = conn
            .prepare("SELECT study_id, occupancy FROM control_buckets")?
            .query_map([], |r| Ok((r.get(0)?, r.get(1)?)))?
            .collect::<Result<_, _>>()?;
        Ok(state)
    }

    /// Appends a submission unless its id was already stored.
    pub fn ingest(&self, sub: &Submission) -> Result<Ingested, ServerError> {
        let mut conn = self.conn.lock();
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let registered: Option<u32> = tx
            .query_row(
                "SELECT study_id FROM participants WHERE participant_id = ?1",
                [sub.participant_id.as_str()],
                |r| r.get(0),
            )
            .optional()?;
        match registered {
            None => return Err(ServerError::UnknownParticipant(sub.participant_id.to_string())),
            Some(id) if id != sub.study_id => {
                return Err(ServerError::StudyMismatch {
                    registered: id,
                    submitted: sub.study_id,
                })
            }
            Some(_) => {}
        }
        let exists: bool = tx.query_row(
            "SELECT EXISTS (SELECT 1 FROM submissions WHERE submission_id = ?1)",
            [sub.submission_id.as_str()],
            |r| r.get(0),
        )?;
        if exists {
            let n: usize = tx.query_row(
                "SELECT COUNT(*) FROM snapshots WHERE submission_id = ?1",
                [sub.submission_id.as_str()],
                |r| r.get(0),
            )?;
            return Ok(Ingested::Duplicate(n));
        }
        tx.execute(
            "INSERT INTO submissions VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
            params![
                sub.submission_id.as_str(),
                sub.participant_id.as_str(),
                sub.study_id,
                sub.plugin_version,
                format_timestamp(&sub.sent_at),
                nanos(&sub.sent_at),
                sub.tz_offset_minutes,
                sub.ui_language,
                sub.order_seed.map(|s| s.to_string()),
            ],
        )?;
        {
            let mut insert = tx.prepare("INSERT INTO snapshots VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)")?;
            for (i, s) in sub.snapshots.iter().enumerate() {
                insert.execute(params![
                    sub.submission_id.as_str(),
                    i as u32,
                    s.query,
                    s.tld,
                    format_timestamp(&s.fetched_at),
                    s.blocked,
                    s.error,
                    json(&s.ads),
                    json(&s.results),
                    json(&s.top_stories),
                ])?;
            }
        }
        tx.commit()?;
        Ok(Ingested::New(sub.snapshots.len()))
    }

    pub fn counts(&self) -> Result<(u64, u64, u64), ServerError> {
        let conn = self.conn.lock();
        let count = |table: &str| -> rusqlite::Result<u64> {
            conn.query_row(&format!("SELECT COUNT(*) FROM {table}"), [], |r| r.get(0))
        };
        Ok((count("participants")?, count("submissions")?, count("snapshots")?))
    }

    pub fn export_rows(&self, filter: &ExportFilter) -> Result<Vec<CorpusRow>, ServerError> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare(
            "SELECT s.submission_id, s.participant_id, s.study_id, p.client_kind, s.plugin_version,
                    s.ui_language, s.sent_at, s.tz_offset_minutes, s.order_seed, n.snapshot_index,
                    n.query, n.tld, n.fetched_at, n.blocked, n.error, n.ads, n.results, n.top_stories
             FROM snapshots n
             JOIN submissions s ON s.submission_id = n.submission_id
             JOIN participants p ON p.participant_id = s.participant_id
             WHERE s.sent_at_ns >= ?1 AND s.sent_at_ns < ?2
             ORDER BY s.sent_at_ns, s.submission_id, n.snapshot_index",
        )?;
        let from = filter.from.as_ref().map_or(i64::MIN, nanos);
        let to = filter.to.as_ref().map_or(i64::MAX, nanos);
        let rows = stmt
            .query_map(params![from, to], |r| {
                let kind: String = r.get(3)?;
                let seed: Option<String> = r.get(8)?;
                Ok(CorpusRow {
                    submission_id: r.get(0)?,
                    participant_id: r.get(1)?,
                    study_id: r.get(2)?,
                    client_kind: if kind == "baseline" { ClientKind::Baseline } else { ClientKind::Donor },
                    plugin_version: r.get(4)?,
                    ui_language: r.get(5)?,
                    sent_at: parse_time(&r.get::<_, String>(6)?)?,
                    tz_offset_minutes: r.get(7)?,
                    order_seed: seed.and_then(|s| s.parse().ok()),
                    snapshot_index: r.get(9)?,
                    query: r.get(10)?,
                    tld: r.get(11)?,
                    fetched_at: parse_time(&r.get::<_, String>(12)?)?,
                    blocked: r.get(13)?,
                    error: r.get(14)?,
                    ads: parse_json(&r.get::<_, String>(15)?)?,
                    results: parse_json(&r.get::<_, String>(16)?)?,
                    top_stories: parse_json(&r.get::<_, String>(17)?)?,
                })
            })?
            .filter(|row| match (row, &filter.groups) {
                (Ok(r), Some(groups)) => groups.contains(&r.study_id),
                _ => true,
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(rows)
    }
}
