//! Per-group, per-keyword, temporal and per-donor aggregates.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

use super::ads::LabeledAd;
use super::stats::{summarize, Summary};
use crate::corpus::CorpusRow;
use crate::model::ClientKind;

/// An exact ratio; the denominator is never zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Option<Self> {
        (den > 0).then_some(Fraction { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub study_id: u32,
    pub entries: u64,
    pub ads: u64,
    pub ads_per_entry: Fraction,
    pub entries_with_ads: u64,
    pub entries_with_ads_fraction: Fraction,
    pub critical_ads: u64,
    /// `None` when the group received no ads.
    pub critical_fraction: Option<Fraction>,
}

#[derive(Default)]
struct Tally {
    entries: u64,
    ads: u64,
    with_ads: u64,
    critical: u64,
}

/// Ad and critical-ad counts per entry index.
pub(crate) fn per_entry_counts(n: usize, labeled: &[LabeledAd]) -> Vec<(u64, u64)> {
    let mut counts = vec![(0u64, 0u64); n];
    for ad in labeled {
        counts[ad.entry].0 += 1;
        counts[ad.entry].1 += u64::from(ad.critical);
    }
    counts
}

/// One row per study group present, ordered by study id.
pub fn group_metrics(entries: &[CorpusRow], labeled: &[LabeledAd]) -> Vec<GroupMetrics> {
    let per_entry = per_entry_counts(entries.len(), labeled);
    let mut groups: BTreeMap<u32, Tally> = BTreeMap::new();
    for (row, &(ads, critical)) in entries.iter().zip(&per_entry) {
        let t = groups.entry(row.study_id).or_default();
        t.entries += 1;
        t.ads += ads;
        t.with_ads += u64::from(ads > 0);
        t.critical += critical;
    }
    groups
        .into_iter()
        .map(|(study_id, t)| GroupMetrics {
            study_id,
            entries: t.entries,
            ads: t.ads,
            ads_per_entry: Fraction { num: t.ads, den: t.entries },
            entries_with_ads: t.with_ads,
            entries_with_ads_fraction: Fraction { num: t.with_ads, den: t.entries },
            critical_ads: t.critical,
            critical_fraction: Fraction::new(t.critical, t.ads),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRow {
    pub term: String,
    pub entries: u64,
    pub ads: u64,
    pub critical_ads: u64,
    pub critical_fraction: Option<Fraction>,
}

/// One row per distinct query term, ordered by term.
pub fn keyword_breakdown(entries: &[CorpusRow], labeled: &[LabeledAd]) -> Vec<KeywordRow> {
    let per_entry = per_entry_counts(entries.len(), labeled);
    let mut terms: BTreeMap<&str, Tally> = BTreeMap::new();
    for (row, &(ads, critical)) in entries.iter().zip(&per_entry) {
        let t = terms.entry(row.query.as_str()).or_default();
        t.entries += 1;
        t.ads += ads;
        t.critical += critical;
    }
    terms
        .into_iter()
        .map(|(term, t)| KeywordRow {
            term: term.to_string(),
            entries: t.entries,
            ads: t.ads,
            critical_ads: t.critical,
            critical_fraction: Fraction::new(t.critical, t.ads),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeBucket {
    /// Local hour of the submission, 24 bins.
    HourOfDay,
    /// UTC calendar date of the submission.
    Day,
}

/// Submission counts per local hour (UTC sent time shifted by the client's offset).
pub fn hour_of_day_histogram(entries: &[CorpusRow]) -> [u64; 24] {
    let mut bins = [0u64; 24];
    for row in entries {
        let local = row.sent_at + Duration::minutes(i64::from(row.tz_offset_minutes));
        bins[local.hour() as usize] += 1;
    }
    bins
}

pub fn day_histogram(entries: &[CorpusRow]) -> BTreeMap<NaiveDate, u64> {
    let mut days = BTreeMap::new();
    for row in entries {
        *days.entry(row.sent_at.date_naive()).or_default() += 1;
    }
    days
}

/// Labelled counts for either bucket kind.
pub fn temporal_histogram(entries: &[CorpusRow], bucket: TimeBucket) -> Vec<(String, u64)> {
    match bucket {
        TimeBucket::HourOfDay => hour_of_day_histogram(entries)
            .iter()
            .enumerate()
            .map(|(h, &c)| (format!("{h:02}"), c))
            .collect(),
        TimeBucket::Day => day_histogram(entries)
            .into_iter()
            .map(|(d, c)| (d.to_string(), c))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonorStats {
    /// Entries per participant, most first, ties by participant id.
    pub counts: Vec<(String, u64)>,
    pub summary: Summary,
    /// Share of entries contributed by baseline agents.
    pub baseline_share: Option<f64>,
}

impl DonorStats {
    /// Share of all entries contributed by the `k` largest contributors.
    pub fn top_k_share(&self, k: usize) -> Option<f64> {
        let total = self.summary.total;
        (total > 0).then(|| self.counts.iter().take(k).map(|c| c.1).sum::<u64>() as f64 / total as f64)
    }
}

pub fn donor_contribution_stats(entries: &[CorpusRow]) -> DonorStats {
    let mut map: BTreeMap<&str, u64> = BTreeMap::new();
    let mut baseline = 0u64;
    for row in entries {
        *map.entry(row.participant_id.as_str()).or_default() += 1;
        baseline += u64::from(row.client_kind == ClientKind::Baseline);
    }
    let mut counts: Vec<(String, u64)> = map.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let summary = summarize(counts.iter().map(|c| c.1));
    DonorStats {
        counts,
        summary,
        baseline_share: (!entries.is_empty()).then(|| baseline as f64 / entries.len() as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AdRecord, HostCategory, Tier};
    use chrono::{TimeZone, Utc};

    pub(crate) fn entry(study_id: u32, participant: &str, query: &str, ads: usize) -> CorpusRow {
        let t = Utc.with_ymd_and_hms(2019, 6, 1, 0, 0, 0).unwrap();
        CorpusRow {
            submission_id: "s".into(),
            participant_id: participant.into(),
            study_id,
            client_kind: ClientKind::Donor,
            plugin_version: "1".into(),
            ui_language: "en".into(),
            sent_at: t,
            tz_offset_minutes: 0,
            order_seed: None,
            snapshot_index: 0,
            query: query.into(),
            tld: "com".into(),
            fetched_at: t,
            blocked: false,
            error: None,
            ads: vec![
                AdRecord {
                    name: "x".into(),
                    title: "t".into(),
                    url: "u".into(),
                    content: "c".into(),
                    resolved_host: "x.com".into(),
                };
                ads
            ],
            results: vec![],
            top_stories: vec![],
        }
    }

    fn label(entry: usize, critical: bool) -> LabeledAd {
        LabeledAd {
            entry,
            ad_index: 0,
            host: "x.com".into(),
            category: if critical { HostCategory::CommercialClinic } else { HostCategory::Governmental },
            tier: if critical { Tier::MostProblematic } else { Tier::Neutral },
            critical,
        }
    }

    #[test]
    fn group_arithmetic() {
        let mut entries: Vec<CorpusRow> = (0..10).map(|_| entry(6, "p", "q", 0)).collect();
        entries.push(entry(15, "c", "q", 0));
        let labeled = vec![label(0, true), label(0, false), label(3, false), label(7, false)];
        let m = group_metrics(&entries, &labeled);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].ads_per_entry.value(), 0.4);
        assert_eq!(m[0].critical_fraction.unwrap().value(), 0.25);
        assert_eq!(m[0].entries_with_ads, 3);
        assert_eq!(m[1].critical_fraction, None);
        assert_eq!(m[1].ads, 0);
    }

    #[test]
    fn more_than_one_ad_per_entry() {
        let entries = vec![entry(20, "vps", "q", 0)];
        let labeled = vec![label(0, false), label(0, false), label(0, true)];
        assert_eq!(group_metrics(&entries, &labeled)[0].ads_per_entry.value(), 3.0);
    }

    #[test]
    fn keywords() {
        let entries = vec![entry(6, "p", "stem cells cure", 0), entry(6, "p", "stem cells", 0)];
        let rows = keyword_breakdown(&entries, &[label(0, true)]);
        assert_eq!(rows[0].term, "stem cells");
        assert_eq!(rows[0].ads, 0);
        assert_eq!(rows[0].critical_fraction, None);
        assert_eq!(rows[1].ads, 1);
        assert_eq!(rows[1].critical_fraction.unwrap().value(), 1.0);
    }

    #[test]
    fn histograms() {
        assert_eq!(hour_of_day_histogram(&[]), [0; 24]);
        let mut e = entry(6, "p", "q", 0);
        e.sent_at = Utc.with_ymd_and_hms(2019, 6, 1, 23, 30, 0).unwrap();
        e.tz_offset_minutes = 600;
        let h = hour_of_day_histogram(std::slice::from_ref(&e));
        assert_eq!(h[9], 1);
        let days = temporal_histogram(&[e], TimeBucket::Day);
        assert_eq!(days, vec![("2019-06-01".to_string(), 1)]);

        let six: Vec<CorpusRow> = [0, 4, 8, 12, 16, 20]
            .iter()
            .map(|&hr| {
                let mut e = entry(6, "p", "q", 0);
                e.sent_at = Utc.with_ymd_and_hms(2019, 6, 1, hr, 5, 0).unwrap() - Duration::minutes(60);
                e.tz_offset_minutes = 60;
                e
            })
            .collect();
        assert_eq!(hour_of_day_histogram(&six).iter().filter(|&&c| c > 0).count(), 6);
    }

    #[test]
    fn donors() {
        let mut entries = Vec::new();
        for (p, n) in [("a", 10), ("b", 5), ("c", 5)] {
            entries.extend((0..n).map(|_| entry(6, p, "q", 0)));
        }
        let s = donor_contribution_stats(&entries);
        assert_eq!(s.summary.median, Some(5.0));
        assert_eq!(s.top_k_share(1), Some(0.5));
        assert_eq!(s.baseline_share, Some(0.0));
        let one = donor_contribution_stats(&entries[..3]);
        assert_eq!(one.top_k_share(1), Some(1.0));
    }
}
