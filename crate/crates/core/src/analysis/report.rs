//! Whole-corpus analysis and the report bundle written to disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ads::{apply_host_labels, explode_ads, host_frequency_stats, HostSource, HostStats, LabeledAd};
use super::metrics::{
    day_histogram, donor_contribution_stats, group_metrics, hour_of_day_histogram,
    keyword_breakdown, per_entry_counts, DonorStats, Fraction, GroupMetrics, KeywordRow,
};
use super::stats::{kruskal_wallis, KwResult};
use super::AnalysisError;
use crate::corpus::CorpusRow;
use crate::model::{HostCategory, HostLabelEntry, Tier};

/// Value compared across groups by the Kruskal-Wallis test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KwVariable {
    #[default]
    CriticalFraction,
    AdsPerEntry,
}

/// What one observation in a Kruskal-Wallis sample is.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KwUnit {
    /// One value per participant within the group.
    #[default]
    Donor,
    /// One value per entry.
    Entry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Restrict to these study groups; all when `None`.
    pub groups: Option<Vec<u32>>,
    pub host_source: HostSource,
    pub kw_variable: KwVariable,
    pub kw_unit: KwUnit,
    /// `k` for the top-k donor share.
    pub top_k: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            groups: None,
            host_source: HostSource::default(),
            kw_variable: KwVariable::default(),
            kw_unit: KwUnit::default(),
            top_k: 20,
        }
    }
}

/// Per-group samples of the chosen variable. Undefined values (a critical
/// fraction with no ads) are left out rather than counted as zero, and
/// groups whose sample ends up empty are dropped.
pub fn kw_samples(
    entries: &[CorpusRow],
    labeled: &[LabeledAd],
    variable: KwVariable,
    unit: KwUnit,
) -> BTreeMap<u32, Vec<f64>> {
    let per_entry = per_entry_counts(entries.len(), labeled);
    let value = |entries: u64, ads: u64, critical: u64| match variable {
        KwVariable::AdsPerEntry => Fraction::new(ads, entries).map(Fraction::value),
        KwVariable::CriticalFraction => Fraction::new(critical, ads).map(Fraction::value),
    };
    let mut samples: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    match unit {
        KwUnit::Entry => {
            for (row, &(ads, critical)) in entries.iter().zip(&per_entry) {
                if let Some(v) = value(1, ads, critical) {
                    samples.entry(row.study_id).or_default().push(v);
                }
            }
        }
        KwUnit::Donor => {
            let mut donors: BTreeMap<(u32, &str), (u64, u64, u64)> = BTreeMap::new();
            for (row, &(ads, critical)) in entries.iter().zip(&per_entry) {
                let d = donors.entry((row.study_id, row.participant_id.as_str())).or_default();
                d.0 += 1;
                d.1 += ads;
                d.2 += critical;
            }
            for ((study_id, _), (n, ads, critical)) in donors {
                if let Some(v) = value(n, ads, critical) {
                    samples.entry(study_id).or_default().push(v);
                }
            }
        }
    }
    samples.retain(|_, s| !s.is_empty());
    samples
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwOutcome {
    pub groups: Vec<u32>,
    pub sample_sizes: Vec<usize>,
    pub variable: KwVariable,
    pub unit: KwUnit,
    pub result: KwResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostRow {
    pub host: String,
    pub count: u64,
    pub category: HostCategory,
    pub tier: Tier,
    pub critical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub entries: u64,
    pub ads: u64,
    pub groups: Vec<GroupMetrics>,
    pub hosts: Vec<HostRow>,
    pub host_stats: HostStats,
    pub keywords: Vec<KeywordRow>,
    pub hours: [u64; 24],
    pub days: Vec<(String, u64)>,
    pub donors: DonorStats,
    pub top_k: usize,
    pub kw: Option<KwOutcome>,
}

pub fn analyze(
    corpus: &[CorpusRow],
    taxonomy: &[HostLabelEntry],
    options: &AnalysisOptions,
) -> Result<Report, AnalysisError> {
    let selected: Vec<CorpusRow>;
    let entries: &[CorpusRow] = match &options.groups {
        Some(groups) => {
            selected = corpus.iter().filter(|r| groups.contains(&r.study_id)).cloned().collect();
            &selected
        }
        None => corpus,
    };
    let exploded = explode_ads(entries);
    let labeled = apply_host_labels(&exploded, taxonomy, options.host_source)?;
    let host_stats = host_frequency_stats(labeled.iter().map(|l| l.host.clone()));
    let label_of: BTreeMap<&str, &LabeledAd> = labeled.iter().map(|l| (l.host.as_str(), l)).collect();
    let hosts = host_stats
        .counts
        .iter()
        .map(|(host, count)| {
            let l = label_of[host.as_str()];
            HostRow {
                host: host.clone(),
                count: *count,
                category: l.category,
                tier: l.tier,
                critical: l.critical,
            }
        })
        .collect();

    let samples = kw_samples(entries, &labeled, options.kw_variable, options.kw_unit);
    let kw = if samples.len() >= 2 {
        let (groups, values): (Vec<u32>, Vec<Vec<f64>>) = samples.into_iter().unzip();
        let result = kruskal_wallis(&values).expect("samples are non-empty and finite");
        Some(KwOutcome {
            groups,
            sample_sizes: values.iter().map(Vec::len).collect(),
            variable: options.kw_variable,
            unit: options.kw_unit,
            result,
        })
    } else {
        None
    };

    Ok(Report {
        entries: entries.len() as u64,
        ads: labeled.len() as u64,
        groups: group_metrics(entries, &labeled),
        hosts,
        host_stats,
        keywords: keyword_breakdown(entries, &labeled),
        hours: hour_of_day_histogram(entries),
        days: day_histogram(entries).into_iter().map(|(d, c)| (d.to_string(), c)).collect(),
        donors: donor_contribution_stats(entries),
        top_k: options.top_k,
        kw,
    })
}

fn fraction_cells(f: Option<Fraction>) -> [String; 3] {
    match f {
        Some(f) => [f.num.to_string(), f.den.to_string(), f.value().to_string()],
        None => [String::new(), String::new(), "undefined".to_string()],
    }
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, AnalysisError> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b';')
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).map_err(AnalysisError::write)?;
    for r in rows {
        w.write_record(&r).map_err(AnalysisError::write)?;
    }
    w.into_inner().map_err(|e| AnalysisError::write(e.into_error()))
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    entries: u64,
    ads: u64,
    groups: usize,
    hosts: &'a super::stats::Summary,
    donors: &'a super::stats::Summary,
    top_k: usize,
    top_k_share: Option<f64>,
    baseline_share: Option<f64>,
    kruskal_wallis: &'a Option<KwOutcome>,
}

/// Writes the report tables and `summary.json` into `dir`, returning the files written.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    fs::create_dir_all(dir).map_err(AnalysisError::write)?;
    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();

    files.push((
        "group_metrics.csv",
        table(
            &[
                "study_id", "entries", "ads", "ads_per_entry", "entries_with_ads",
                "entries_with_ads_fraction", "critical_ads", "critical_num", "critical_den",
                "critical_fraction",
            ],
            report.groups.iter().map(|g| {
                let [num, den, frac] = fraction_cells(g.critical_fraction);
                vec![
                    g.study_id.to_string(),
                    g.entries.to_string(),
                    g.ads.to_string(),
                    g.ads_per_entry.value().to_string(),
                    g.entries_with_ads.to_string(),
                    g.entries_with_ads_fraction.value().to_string(),
                    g.critical_ads.to_string(),
                    num,
                    den,
                    frac,
                ]
            }),
        )?,
    ));
    files.push((
        "hosts.csv",
        table(
            &["host", "count", "category", "tier", "critical"],
            report.hosts.iter().map(|h| {
                vec![
                    h.host.clone(),
                    h.count.to_string(),
                    h.category.label().to_string(),
                    h.tier.label().to_string(),
                    h.critical.to_string(),
                ]
            }),
        )?,
    ));
    files.push((
        "keywords.csv",
        table(
            &["term", "entries", "ads", "critical_ads", "critical_fraction"],
            report.keywords.iter().map(|k| {
                let [_, _, frac] = fraction_cells(k.critical_fraction);
                vec![
                    k.term.clone(),
                    k.entries.to_string(),
                    k.ads.to_string(),
                    k.critical_ads.to_string(),
                    frac,
                ]
            }),
        )?,
    ));
    files.push((
        "hour_of_day.csv",
        table(
            &["hour", "entries"],
            report.hours.iter().enumerate().map(|(h, c)| vec![format!("{h:02}"), c.to_string()]),
        )?,
    ));
    files.push((
        "days.csv",
        table(&["day", "entries"], report.days.iter().map(|(d, c)| vec![d.clone(), c.to_string()]))?,
    ));
    files.push((
        "donors.csv",
        table(
            &["participant_id", "entries"],
            report.donors.counts.iter().map(|(p, c)| vec![p.clone(), c.to_string()]),
        )?,
    ));
    let summary = SummaryDoc {
        entries: report.entries,
        ads: report.ads,
        groups: report.groups.len(),
        hosts: &report.host_stats.summary,
        donors: &report.donors.summary,
        top_k: report.top_k,
        top_k_share: report.donors.top_k_share(report.top_k),
        baseline_share: report.donors.baseline_share,
        kruskal_wallis: &report.kw,
    };
    let mut json = serde_json::to_vec_pretty(&summary).expect("summary serialises");
    json.push(b'\n');
    files.push(("summary.json", json));

    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(AnalysisError::write)?;
        written.push(path);
    }
    Ok(written)
}
