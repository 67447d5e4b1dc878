//! Ad rows, advertiser hosts and taxonomy labels.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::stats::{summarize, Summary};
use super::AnalysisError;
use crate::corpus::CorpusRow;
use crate::model::{canonicalize_host, AdRecord, HostCategory, HostLabelEntry, Tier, UNKNOWN_HOST};

/// One ad occurrence with a reference to its entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdRow<'a> {
    /// Index of the entry in the corpus slice.
    pub entry: usize,
    pub ad_index: usize,
    pub ad: &'a AdRecord,
}

/// One row per ad, ordered by entry then position on the page.
pub fn explode_ads(entries: &[CorpusRow]) -> Vec<AdRow<'_>> {
    entries
        .iter()
        .enumerate()
        .flat_map(|(entry, row)| {
            row.ads
                .iter()
                .enumerate()
                .map(move |(ad_index, ad)| AdRow { entry, ad_index, ad })
        })
        .collect()
}

/// Which field names an ad's advertiser.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HostSource {
    /// Host resolved from the ad's link.
    Landing,
    /// The displayed host line.
    DisplayName,
    /// The resolved host, falling back to the display line when unresolved.
    #[default]
    LandingThenName,
}

impl HostSource {
    pub fn host(self, ad: &AdRecord) -> String {
        let from_name = || {
            let h = canonicalize_host(&ad.name);
            if h.is_empty() {
                UNKNOWN_HOST.to_string()
            } else {
                h
            }
        };
        match self {
            HostSource::Landing => ad.resolved_host.clone(),
            HostSource::DisplayName => from_name(),
            HostSource::LandingThenName if ad.resolved_host == UNKNOWN_HOST || ad.resolved_host.is_empty() => {
                from_name()
            }
            HostSource::LandingThenName => ad.resolved_host.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostStats {
    /// Per-host counts, most frequent first, ties by host.
    pub counts: Vec<(String, u64)>,
    pub summary: Summary,
}

pub fn host_frequency_stats(hosts: impl IntoIterator<Item = String>) -> HostStats {
    let mut map: BTreeMap<String, u64> = BTreeMap::new();
    for h in hosts {
        *map.entry(h).or_default() += 1;
    }
    let mut counts: Vec<(String, u64)> = map.into_iter().collect();
    counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let summary = summarize(counts.iter().map(|c| c.1));
    HostStats { counts, summary }
}

/// Reads a `host;category;critical` taxonomy. A header row is optional and
/// hosts are canonicalised.
pub fn parse_taxonomy<R: Read>(input: R) -> Result<Vec<HostLabelEntry>, AnalysisError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| AnalysisError::Taxonomy {
            line: i + 1,
            message: e.to_string(),
        })?;
        let bad = |message: String| AnalysisError::Taxonomy { line: i + 1, message };
        if record.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", record.len())));
        }
        if i == 0 && record[0].eq_ignore_ascii_case("host") {
            continue;
        }
        let category: HostCategory = record[1]
            .parse()
            .map_err(|_| bad(format!("unknown category {:?}", &record[1])))?;
        let critical = match record[2].to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => true,
            "false" | "no" | "0" => false,
            other => return Err(bad(format!("critical must be true or false, found {other:?}"))),
        };
        entries.push(HostLabelEntry {
            host: canonicalize_host(&record[0]),
            category,
            critical,
        });
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledAd {
    pub entry: usize,
    pub ad_index: usize,
    pub host: String,
    pub category: HostCategory,
    pub tier: Tier,
    pub critical: bool,
}

/// Attaches taxonomy labels; hosts missing from the taxonomy become
/// `unknown` / not to determine / non-critical.
pub fn apply_host_labels(
    ads: &[AdRow<'_>],
    taxonomy: &[HostLabelEntry],
    source: HostSource,
) -> Result<Vec<LabeledAd>, AnalysisError> {
    let mut index: HashMap<&str, &HostLabelEntry> = HashMap::with_capacity(taxonomy.len());
    for e in taxonomy {
        if index.insert(e.host.as_str(), e).is_some() {
            return Err(AnalysisError::DuplicateTaxonomyHost(e.host.clone()));
        }
    }
    Ok(ads
        .iter()
        .map(|row| {
            let host = source.host(row.ad);
            let (category, critical) = index
                .get(host.as_str())
                .map_or((HostCategory::Unknown, false), |e| (e.category, e.critical));
            LabeledAd {
                entry: row.entry,
                ad_index: row.ad_index,
                host,
                category,
                tier: category.tier(),
                critical,
            }
        })
        .collect())
}
