//! Query sets, crawl order and search request URLs.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::model::Condition;

pub const DISEASE_PLACEHOLDER: &str = "[disease]";

const DEFAULT_TEMPLATES: &str = include_str!("../data/query_templates.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("search term is empty")]
    EmptyTerm,
    #[error("template {0:?} contains the placeholder more than once")]
    RepeatedPlaceholder(String),
    #[error("template file line {line}: {message}")]
    TemplateFile { line: usize, message: String },
    #[error("query set contains duplicate term {0:?}")]
    DuplicateTerm(String),
    #[error("query set is empty")]
    EmptySet,
}

/// A search pattern, possibly containing one `[disease]` placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct QueryTemplate(String);

impl QueryTemplate {
    pub fn new(pattern: &str) -> Result<Self, QueryError> {
        let pattern = pattern.trim();
        if pattern.is_empty() {
            return Err(QueryError::EmptyTerm);
        }
        if pattern.matches(DISEASE_PLACEHOLDER).count() > 1 {
            return Err(QueryError::RepeatedPlaceholder(pattern.to_string()));
        }
        Ok(QueryTemplate(pattern.to_string()))
    }

    pub fn is_generic(&self) -> bool {
        !self.0.contains(DISEASE_PLACEHOLDER)
    }

    pub fn pattern(&self) -> &str {
        &self.0
    }

    pub fn instantiate(&self, condition: Condition) -> String {
        self.0.replace(DISEASE_PLACEHOLDER, condition.query_token())
    }
}

impl TryFrom<String> for QueryTemplate {
    type Error = QueryError;

    fn try_from(s: String) -> Result<Self, QueryError> {
        QueryTemplate::new(&s)
    }
}

impl From<QueryTemplate> for String {
    fn from(t: QueryTemplate) -> String {
        t.0
    }
}

/// Versioned list of templates, one pattern per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTemplates {
    pub version: u64,
    pub templates: Vec<QueryTemplate>,
}

impl QueryTemplates {
    /// Parses the template file format: an optional `version = N` header,
    /// `#` comments, blank lines ignored, otherwise one pattern per line.
    pub fn parse(text: &str) -> Result<Self, QueryError> {
        let mut version = 1;
        let mut templates = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("version") {
                if let Some(v) = rest.trim_start().strip_prefix('=') {
                    version = v.trim().parse().map_err(|_| QueryError::TemplateFile {
                        line: i + 1,
                        message: format!("bad version {:?}", v.trim()),
                    })?;
                    continue;
                }
            }
            templates.push(QueryTemplate::new(line).map_err(|e| QueryError::TemplateFile {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(QueryTemplates { version, templates })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("version = {}\n", self.version);
        for t in &self.templates {
            out.push_str(t.pattern());
            out.push('\n');
        }
        out
    }

    pub fn compose(&self, study_id: u32, condition: Condition) -> Result<QuerySet, QueryError> {
        QuerySet::new(
            study_id,
            self.templates.iter().map(|t| t.instantiate(condition)).collect(),
        )
    }
}

impl Default for QueryTemplates {
    fn default() -> Self {
        QueryTemplates::parse(DEFAULT_TEMPLATES).expect("bundled templates parse")
    }
}

/// The ordered search terms of one study group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySet {
    pub study_id: u32,
    pub terms: Vec<String>,
}

impl QuerySet {
    pub fn new(study_id: u32, terms: Vec<String>) -> Result<Self, QueryError> {
        if terms.is_empty() {
            return Err(QueryError::EmptySet);
        }
        let mut seen = HashSet::new();
        for t in &terms {
            if t.trim().is_empty() {
                return Err(QueryError::EmptyTerm);
            }
            if !seen.insert(t.as_str()) {
                return Err(QueryError::DuplicateTerm(t.clone()));
            }
        }
        Ok(QuerySet { study_id, terms })
    }
}

/// The bundled 14-term set for `condition`.
pub fn compose_query_set(study_id: u32, condition: Condition) -> QuerySet {
    QueryTemplates::default()
        .compose(study_id, condition)
        .expect("bundled templates yield distinct terms")
}

/// Deterministic permutation of the set's terms for one crawl cycle.
pub fn randomize_order(set: &QuerySet, seed: u64) -> Vec<String> {
    let mut terms = set.terms.clone();
    terms.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    terms
}

/// `https://www.google.<tld>/search?q=<term>`, with the term form-encoded
/// (spaces as `+`).
pub fn build_search_url(tld: &str, term: &str) -> Result<String, QueryError> {
    if term.trim().is_empty() {
        return Err(QueryError::EmptyTerm);
    }
    let encoded: String = url::form_urlencoded::byte_serialize(term.as_bytes()).collect();
    Ok(format!("https://www.google.{tld}/search?q={encoded}"))
}

/// Inverse of [`build_search_url`]: the country domain and decoded term.
pub fn parse_search_url(raw: &str) -> Option<(String, String)> {
    let url = Url::parse(raw).ok()?;
    let tld = url.host_str()?.strip_prefix("www.google.")?.to_string();
    let term = url
        .query_pairs()
        .find(|(k, _)| k == "q")
        .map(|(_, v)| v.into_owned())?;
    Some((tld, term))
}
