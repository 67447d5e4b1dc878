use chrono::{TimeZone, Utc};

use super::*;
use crate::corpus::CorpusRow;
use crate::model::{AdRecord, ClientKind, HostCategory, HostLabelEntry};

fn ad(host: &str) -> AdRecord {
    AdRecord {
        name: format!("www.{host}/"),
        title: "t".into(),
        url: format!("https://{host}/"),
        content: "c".into(),
        resolved_host: host.into(),
    }
}

fn row(i: usize, study_id: u32, participant: &str, ads: Vec<AdRecord>) -> CorpusRow {
    let t = Utc.with_ymd_and_hms(2019, 6, 1, (i % 24) as u32, 0, 0).unwrap();
    CorpusRow {
        submission_id: format!("{i:032x}"),
        participant_id: participant.into(),
        study_id,
        client_kind: if participant.starts_with("vps") { ClientKind::Baseline } else { ClientKind::Donor },
        plugin_version: "1".into(),
        ui_language: "en".into(),
        sent_at: t,
        tz_offset_minutes: 0,
        order_seed: None,
        snapshot_index: 0,
        query: ["stem cells", "stem cells cure"][i % 2].into(),
        tld: "com".into(),
        fetched_at: t,
        blocked: false,
        error: None,
        ads,
        results: vec![],
        top_stories: vec![],
    }
}

fn taxonomy() -> Vec<HostLabelEntry> {
    vec![
        HostLabelEntry {
            host: "clinic.com".into(),
            category: HostCategory::CommercialClinic,
            critical: true,
        },
        HostLabelEntry {
            host: "nhs.uk".into(),
            category: HostCategory::Governmental,
            critical: false,
        },
    ]
}

/// 100 entries, six of which carry nine ads between them.
fn corpus() -> Vec<CorpusRow> {
    let placements: [(usize, &[&str]); 6] = [
        (3, &["clinic.com"]),
        (10, &["clinic.com", "nhs.uk"]),
        (22, &["other.org"]),
        (41, &["clinic.com", "clinic.com"]),
        (67, &["nhs.uk"]),
        (90, &["nhs.uk", "other.org"]),
    ];
    (0..100)
        .map(|i| {
            let ads = placements
                .iter()
                .find(|p| p.0 == i)
                .map(|p| p.1.iter().map(|h| ad(h)).collect())
                .unwrap_or_default();
            let (study, who) = if i < 50 { (6, ["a", "b"][i % 2]) } else { (15, ["c", "vps1"][i % 2]) };
            row(i, study, who, ads)
        })
        .collect()
}

#[test]
fn explode_counts() {
    let c = corpus();
    assert_eq!(explode_ads(&c).len(), 9);
    let report = analyze(&c, &taxonomy(), &AnalysisOptions::default()).unwrap();
    assert_eq!(report.ads, 9);
    let with_ads: u64 = report.groups.iter().map(|g| g.entries_with_ads).sum();
    assert_eq!(Fraction::new(with_ads, report.entries).unwrap().value(), 0.06);
}

#[test]
fn report_contents() {
    let report = analyze(&corpus(), &taxonomy(), &AnalysisOptions::default()).unwrap();
    assert_eq!(report.hosts[0].host, "clinic.com");
    assert_eq!(report.hosts[0].count, 4);
    assert_eq!(report.hosts[1].host, "nhs.uk");
    assert_eq!(report.hosts[2].category, HostCategory::Unknown);
    let g6 = &report.groups[0];
    assert_eq!((g6.study_id, g6.entries, g6.ads, g6.critical_ads), (6, 50, 6, 4));
    assert_eq!(report.donors.baseline_share, Some(0.25));
    assert_eq!(report.keywords.len(), 2);
    assert_eq!(report.hours.iter().sum::<u64>(), 100);
}

#[test]
fn group_filter() {
    let opts = AnalysisOptions {
        groups: Some(vec![15]),
        ..Default::default()
    };
    let report = analyze(&corpus(), &taxonomy(), &opts).unwrap();
    assert_eq!(report.entries, 50);
    assert_eq!(report.groups.len(), 1);
    assert!(report.kw.is_none());
}

#[test]
fn kw_sample_choices() {
    let c = corpus();
    let labeled = apply_host_labels(&explode_ads(&c), &taxonomy(), HostSource::default()).unwrap();
    let per_entry = kw_samples(&c, &labeled, KwVariable::AdsPerEntry, KwUnit::Entry);
    assert_eq!(per_entry[&6].len(), 50);
    let per_donor = kw_samples(&c, &labeled, KwVariable::AdsPerEntry, KwUnit::Donor);
    assert_eq!(per_donor[&6].len(), 2);
    // critical fractions exist only where ads were seen
    let crit = kw_samples(&c, &labeled, KwVariable::CriticalFraction, KwUnit::Entry);
    assert_eq!(crit.values().map(Vec::len).sum::<usize>(), 6);
}

#[test]
fn emitted_bundle_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let report = analyze(&corpus(), &taxonomy(), &AnalysisOptions::default()).unwrap();
    let a = emit_report(&report, &dir.path().join("a")).unwrap();
    let again = analyze(&corpus(), &taxonomy(), &AnalysisOptions::default()).unwrap();
    let b = emit_report(&again, &dir.path().join("b")).unwrap();
    assert_eq!(a.len(), 7);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{x:?}");
    }
    let groups = std::fs::read_to_string(&a[0]).unwrap();
    assert!(groups.starts_with("study_id;entries;ads;"));
    assert!(groups.contains("\n6;50;6;0.12;"));
}

#[test]
fn empty_corpus_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let report = analyze(&[], &taxonomy(), &AnalysisOptions::default()).unwrap();
    emit_report(&report, dir.path()).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["entries"], 0);
    assert_eq!(summary["ads"], 0);
    assert!(summary["kruskal_wallis"].is_null());
    let hosts = std::fs::read_to_string(dir.path().join("hosts.csv")).unwrap();
    assert_eq!(hosts, "host;count;category;tier;critical\n");
}
