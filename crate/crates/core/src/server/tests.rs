use std::sync::Arc;

use chrono::{Duration, TimeZone};

use super::*;
use crate::model::{AdRecord, SerpSnapshot, SurveyResponse};

fn server() -> CollectionServer {
    CollectionServer::in_memory(GroupTable::bundled(), ConfigBundle::bundled()).unwrap()
}

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2019, 6, 1, 8, 0, 0).unwrap()
}

fn form(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    let mut base: BTreeMap<String, String> = [
        ("pd_status", "no"),
        ("ms_status", "no"),
        ("db_status", "no"),
        ("researcher", "no"),
        ("residence", "uk"),
        ("age_band", "40-49"),
        ("gender", "female"),
        ("device_use", "daily_gt2"),
        ("search_use", "daily_le2"),
        ("paid_or_inquired_sct", "no"),
        ("city_choice", "not_said"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    for (k, v) in pairs {
        base.insert(k.to_string(), v.to_string());
    }
    base
}

fn request(pairs: &[(&str, &str)]) -> RegisterRequest {
    RegisterRequest {
        consent: true,
        survey: form(pairs),
        plugin_version: "1.2.0".into(),
        ui_language: "en-GB".into(),
        client_kind: ClientKind::Donor,
    }
}

fn submission(reg: &RegisterResponse, n: usize, at: DateTime<Utc>) -> Submission {
    Submission {
        submission_id: SubmissionId::random(),
        participant_id: reg.participant_id.clone(),
        study_id: reg.study_id,
        plugin_version: "1.2.0".into(),
        sent_at: at,
        tz_offset_minutes: 60,
        ui_language: "en-GB".into(),
        order_seed: Some(7),
        snapshots: reg.terms[..n]
            .iter()
            .map(|q| SerpSnapshot {
                query: q.clone(),
                tld: "co.uk".into(),
                fetched_at: at,
                ads: vec![AdRecord {
                    name: "www.clinic.com/".into(),
                    title: "Clinic; \"best\"".into(),
                    url: "https://clinic.com/".into(),
                    content: "line\nbreak 😊".into(),
                    resolved_host: "clinic.com".into(),
                }],
                results: vec![],
                top_stories: vec![],
                blocked: false,
                raw_page: None,
                error: None,
            })
            .collect(),
    }
}

#[test]
fn pd_patient_in_uk_gets_group_6() {
    let s = server();
    let r = s.register(&request(&[("pd_status", "patient")]), t0()).unwrap();
    assert_eq!(r.study_id, 6);
    assert_eq!(r.terms.len(), 14);
    assert!(r.terms.iter().any(|t| t.contains("parkinson's")));
    let stored = s.participant(&r.participant_id).unwrap().unwrap();
    assert_eq!(stored.study_id, 6);
    assert_eq!(stored.registered_at, t0());
}

#[test]
fn unaffected_fill_pd_control_first() {
    let s = server();
    let r = s.register(&request(&[]), t0()).unwrap();
    assert_eq!(r.study_id, 15);
    assert_eq!(s.occupancy().unwrap(), AssignmentState::from([(15, 1)]));
}

#[test]
fn ms_carer_in_canada() {
    let s = server();
    let r = s.register(&request(&[("ms_status", "carer"), ("residence", "ca")]), t0()).unwrap();
    assert_eq!(r.study_id, 1);
    assert!(r.terms.iter().any(|t| t.contains("multiple sclerosis")));
}

#[test]
fn consent_and_validation_guards_persist_nothing() {
    let s = server();
    let mut req = request(&[]);
    req.consent = false;
    assert!(matches!(s.register(&req, t0()), Err(ServerError::ConsentMissing)));
    let bad = request(&[("gender", "sometimes")]);
    assert!(matches!(s.register(&bad, t0()), Err(ServerError::ValidationFailed(_))));
    assert_eq!(s.health().unwrap().participants, 0);
    assert!(s.occupancy().unwrap().is_empty());
}

#[test]
fn ingest_is_idempotent() {
    let s = server();
    let reg = s.register(&request(&[("pd_status", "patient")]), t0()).unwrap();
    let sub = submission(&reg, 14, t0());
    let ack = s.ingest(&sub).unwrap();
    assert_eq!((ack.stored, ack.duplicate), (14, false));
    let again = s.ingest(&sub).unwrap();
    assert_eq!((again.stored, again.duplicate), (14, true));
    assert_eq!(s.health().unwrap().snapshots, 14);
    assert_eq!(s.export_rows(&ExportFilter::default()).unwrap().len(), 14);
}

#[test]
fn ingest_guards() {
    let s = server();
    let reg = s.register(&request(&[("pd_status", "patient")]), t0()).unwrap();
    let mut stranger = submission(&reg, 2, t0());
    stranger.participant_id = ParticipantId::random();
    assert!(matches!(s.ingest(&stranger), Err(ServerError::UnknownParticipant(_))));
    let mut wrong = submission(&reg, 2, t0());
    wrong.study_id = 15;
    assert!(matches!(
        s.ingest(&wrong),
        Err(ServerError::StudyMismatch { registered: 6, submitted: 15 })
    ));
    let empty = submission(&reg, 0, t0());
    assert!(matches!(s.ingest(&empty), Err(ServerError::InvalidSubmission(_))));
    assert_eq!(s.health().unwrap().snapshots, 0);
}

#[test]
fn config_versions() {
    let s = server();
    let mut bundle = ConfigBundle::bundled();
    bundle.version = 4;
    s.publish_config(bundle.clone()).unwrap();
    assert_eq!(s.serve_config(3), ConfigReply::Update(bundle.clone()));
    assert_eq!(s.serve_config(4), ConfigReply::NotModified);
    assert_eq!(s.serve_config(9), ConfigReply::NotModified);
    bundle.version = 2;
    assert!(matches!(s.publish_config(bundle), Err(ServerError::StaleConfig { .. })));
}

#[test]
fn export_filters_and_round_trips() {
    let s = server();
    assert_eq!(
        s.export_corpus(&ExportFilter::default()).unwrap(),
        format!("{}\n", crate::corpus::COLUMNS.join(";"))
    );
    let pd = s.register(&request(&[("pd_status", "patient")]), t0()).unwrap();
    let control = s.register(&request(&[]), t0()).unwrap();
    s.ingest(&submission(&pd, 3, t0())).unwrap();
    s.ingest(&submission(&control, 2, t0() + Duration::days(1))).unwrap();

    let all = s.export_corpus(&ExportFilter::default()).unwrap();
    let rows = crate::corpus::read_corpus(all.as_bytes()).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(crate::corpus::export_to_string(&rows), all);
    assert_eq!(rows[0].ads[0].content, "line\nbreak 😊");

    let only_pd = ExportFilter {
        groups: Some(vec![6]),
        ..Default::default()
    };
    assert_eq!(s.export_rows(&only_pd).unwrap().len(), 3);
    let first_day = ExportFilter {
        from: Some(t0()),
        to: Some(t0() + Duration::hours(1)),
        groups: None,
    };
    assert_eq!(s.export_rows(&first_day).unwrap().len(), 3);
}

#[test]
fn concurrent_registrations_do_not_lose_updates() {
    let s = Arc::new(server());
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let s = Arc::clone(&s);
            std::thread::spawn(move || {
                (0..20)
                    .map(|_| s.register(&request(&[]), t0()).unwrap().study_id)
                    .collect::<Vec<_>>()
            })
        })
        .collect();
    let mut ids: Vec<u32> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
    ids.sort();
    assert_eq!(ids.iter().filter(|&&i| i == 15).count(), 50);
    assert_eq!(ids.iter().filter(|&&i| i == 13).count(), 50);
    assert_eq!(ids.iter().filter(|&&i| i == 14).count(), 50);
    assert_eq!(ids.iter().filter(|&&i| i == 19).count(), 10);
}

#[test]
fn survey_field_map_round_trips_through_register() {
    let s = server();
    let r = s.register(&request(&[("db_status", "patient"), ("residence", "au")]), t0()).unwrap();
    let stored: SurveyResponse = s.participant(&r.participant_id).unwrap().unwrap().survey;
    assert_eq!(validate_survey(&stored.to_field_map()).unwrap(), stored);
    assert_eq!(r.study_id, 8);
}
