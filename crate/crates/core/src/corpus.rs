//! Exported corpus: one row per snapshot, ';'-delimited, with nested
//! ads/results/stories as compact JSON. Export and import are exact inverses
//! on the row level, so re-exporting an imported file reproduces it byte for byte.

use std::io::{Read, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AdRecord, ClientKind, OrganicResult, SerpSnapshot, TopStory};

pub const DELIMITER: u8 = b';';

pub const COLUMNS: [&str; 18] = [
    "submission_id",
    "participant_id",
    "study_id",
    "client_kind",
    "plugin_version",
    "ui_language",
    "sent_at",
    "tz_offset_minutes",
    "order_seed",
    "snapshot_index",
    "query",
    "tld",
    "fetched_at",
    "blocked",
    "error",
    "ads",
    "results",
    "top_stories",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus format: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("line {line}: column {column}: {message}")]
    Field {
        line: u64,
        column: &'static str,
        message: String,
    },
}

/// One snapshot with the submission and participant fields it joins to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRow {
    pub submission_id: String,
    pub participant_id: String,
    pub study_id: u32,
    pub client_kind: ClientKind,
    pub plugin_version: String,
    pub ui_language: String,
    pub sent_at: DateTime<Utc>,
    pub tz_offset_minutes: i32,
    pub order_seed: Option<u64>,
    pub snapshot_index: u32,
    pub query: String,
    pub tld: String,
    pub fetched_at: DateTime<Utc>,
    pub blocked: bool,
    pub error: Option<String>,
    pub ads: Vec<AdRecord>,
    pub results: Vec<OrganicResult>,
    pub top_stories: Vec<TopStory>,
}

impl CorpusRow {
    pub fn snapshot(&self) -> SerpSnapshot {
        SerpSnapshot {
            query: self.query.clone(),
            tld: self.tld.clone(),
            fetched_at: self.fetched_at,
            ads: self.ads.clone(),
            results: self.results.clone(),
            top_stories: self.top_stories.clone(),
            blocked: self.blocked,
            raw_page: None,
            error: self.error.clone(),
        }
    }
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("corpus values serialise")
}

/// Writes the header and rows.
pub fn write_corpus<'a, W: Write>(
    out: W,
    rows: impl IntoIterator<Item = &'a CorpusRow>,
) -> Result<(), CorpusError> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(DELIMITER)
        .quote_style(csv::QuoteStyle::Necessary)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record([
            r.submission_id.clone(),
            r.participant_id.clone(),
            r.study_id.to_string(),
            r.client_kind.code().to_string(),
            r.plugin_version.clone(),
            r.ui_language.clone(),
            format_timestamp(&r.sent_at),
            r.tz_offset_minutes.to_string(),
            r.order_seed.map(|s| s.to_string()).unwrap_or_default(),
            r.snapshot_index.to_string(),
            r.query.clone(),
            r.tld.clone(),
            format_timestamp(&r.fetched_at),
            r.blocked.to_string(),
            r.error.clone().unwrap_or_default(),
            json(&r.ads),
            json(&r.results),
            json(&r.top_stories),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_to_string(rows: &[CorpusRow]) -> String {
    let mut buf = Vec::new();
    write_corpus(&mut buf, rows).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("corpus fields are UTF-8")
}

/// Parses an exported corpus.
pub fn read_corpus<R: Read>(input: R) -> Result<Vec<CorpusRow>, CorpusError> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(DELIMITER)
        .has_headers(true)
        .from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(CorpusError::Header(header));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |i: usize| record.get(i).unwrap_or_default();
        let bad = |column: &'static str, message: String| CorpusError::Field {
            line,
            column,
            message,
        };
        macro_rules! parse {
            ($i:expr) => {
                get($i)
                    .parse()
                    .map_err(|e| bad(COLUMNS[$i], format!("{e}")))?
            };
        }
        macro_rules! nested {
            ($i:expr) => {
                serde_json::from_str(get($i)).map_err(|e| bad(COLUMNS[$i], e.to_string()))?
            };
        }
        let time = |i: usize| {
            DateTime::parse_from_rfc3339(get(i))
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| bad(COLUMNS[i], e.to_string()))
        };
        let optional = |s: &str| (!s.is_empty()).then(|| s.to_string());
        rows.push(CorpusRow {
            submission_id: get(0).to_string(),
            participant_id: get(1).to_string(),
            study_id: parse!(2),
            client_kind: parse!(3),
            plugin_version: get(4).to_string(),
            ui_language: get(5).to_string(),
            sent_at: time(6)?,
            tz_offset_minutes: parse!(7),
            order_seed: match get(8) {
                "" => None,
                s => Some(s.parse().map_err(|e| bad(COLUMNS[8], format!("{e}")))?),
            },
            snapshot_index: parse!(9),
            query: get(10).to_string(),
            tld: get(11).to_string(),
            fetched_at: time(12)?,
            blocked: parse!(13),
            error: optional(get(14)),
            ads: nested!(15),
            results: nested!(16),
            top_stories: nested!(17),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn row(query: &str, ad_text: &str) -> CorpusRow {
        let t = Utc.with_ymd_and_hms(2019, 7, 1, 12, 0, 5).unwrap();
        CorpusRow {
            submission_id: "a".repeat(32),
            participant_id: "b".repeat(32),
            study_id: 6,
            client_kind: ClientKind::Donor,
            plugin_version: "1.0.0".into(),
            ui_language: "en-GB".into(),
            sent_at: t,
            tz_offset_minutes: 60,
            order_seed: Some(42),
            snapshot_index: 0,
            query: query.into(),
            tld: "co.uk".into(),
            fetched_at: t,
            blocked: false,
            error: None,
            ads: vec![AdRecord {
                name: "www.x.com/".into(),
                title: ad_text.into(),
                url: "https://x.com/?a=1;b=\"2\"".into(),
                content: ad_text.into(),
                resolved_host: "x.com".into(),
            }],
            results: vec![],
            top_stories: vec![],
        }
    }

    #[test]
    fn empty_corpus_is_header_only() {
        assert_eq!(export_to_string(&[]), format!("{}\n", COLUMNS.join(";")));
        assert!(read_corpus(export_to_string(&[]).as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn escaping_round_trip() {
        let rows = vec![
            row("stem cells; cost", "Say \"hi\";\nnew line 😊"),
            row("plain", "ok"),
        ];
        let text = export_to_string(&rows);
        assert!(text.contains("\"stem cells; cost\""));
        let back = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(back, rows);
        assert_eq!(export_to_string(&back), text);
    }

    #[test]
    fn header_is_checked() {
        let err = read_corpus("a;b\n1;2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::Header(_)));
    }

    #[test]
    fn bad_field_reports_column() {
        let text = export_to_string(&[row("q", "t")]).replace(";6;donor;", ";six;donor;");
        match read_corpus(text.as_bytes()) {
            Err(CorpusError::Field { column, .. }) => assert_eq!(column, "study_id"),
            other => panic!("{other:?}"),
        }
    }
}
