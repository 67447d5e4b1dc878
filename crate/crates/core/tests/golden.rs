//! Fixed schedule and wire-body vectors shared with other clients.
//! Regenerate with `UPDATE_GOLDEN=1 cargo test --test golden`.

use std::path::PathBuf;

use chrono::{DateTime, Duration, TimeZone, Utc};
use chrono_tz::Tz;
use serde_json::{json, Value};
use serpaudit_core::agent::{default_timezone, next_fire_instant, offset_minutes};
use serpaudit_core::extract::Extractor;
use serpaudit_core::mock_ise::{MockConfig, MockEngine, MockQuery};
use serpaudit_core::server::{CollectionServer, ConfigBundle, GroupTable, RegisterRequest, RegisterResponse, SubmitAck};
use serpaudit_core::sim::survey_for;
use serpaudit_core::{ClientKind, Condition, ExtractionRuleSet, ParticipantId, Region, Submission, SubmissionId};

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check(name: &str, actual: &Value) {
    let path = golden_path(name);
    let rendered = serde_json::to_string_pretty(actual).unwrap() + "\n";
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, rendered).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("{name} missing; run with UPDATE_GOLDEN=1"));
    assert_eq!(rendered, expected, "{name} differs from the checked-in vector");
}

fn schedule_case(zone: &str, start: DateTime<Utc>, stagger: i64, n: usize) -> Value {
    let tz: Tz = zone.parse().unwrap();
    let mut t = start;
    let fires: Vec<Value> = (0..n)
        .map(|_| {
            t = next_fire_instant(t, &tz, Duration::seconds(stagger));
            json!({
                "utc": t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                "local": t.with_timezone(&tz).format("%Y-%m-%dT%H:%M:%S").to_string(),
                "offset_minutes": offset_minutes(&tz, t),
            })
        })
        .collect();
    json!({
        "zone": zone,
        "after": start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        "stagger_seconds": stagger,
        "fires": fires,
    })
}

#[test]
fn schedule_vectors() {
    let at = |y, m, d, h, mi| Utc.with_ymd_and_hms(y, m, d, h, mi, 0).unwrap();
    let mut cases = Vec::new();
    for region in [Region::Australia, Region::Canada, Region::UnitedKingdom, Region::UnitedStates] {
        cases.push(schedule_case(default_timezone(region), at(2019, 6, 3, 0, 10), 0, 7));
    }
    // spring forward and fall back
    cases.push(schedule_case("Europe/London", at(2019, 3, 30, 22, 0), 0, 8));
    cases.push(schedule_case("Europe/London", at(2019, 10, 26, 22, 0), 0, 8));
    cases.push(schedule_case("Australia/Sydney", at(2019, 4, 6, 10, 0), 0, 8));
    cases.push(schedule_case("America/Havana", at(2019, 3, 9, 22, 0), 0, 8));
    cases.push(schedule_case("America/Havana", at(2019, 11, 2, 22, 0), 0, 8));
    // staggered, and a start exactly on a fire
    cases.push(schedule_case("America/New_York", at(2019, 6, 3, 4, 0), 420, 6));
    cases.push(schedule_case("UTC", at(2019, 6, 3, 8, 0), 0, 3));
    check("schedule.json", &json!(cases));
}

fn sample_submission(participant: ParticipantId, study_id: u32) -> Submission {
    let engine = MockEngine::new(MockConfig::bundled()).unwrap();
    let extractor = Extractor::new(ExtractionRuleSet::bundled()).unwrap();
    let base = Utc.with_ymd_and_hms(2019, 6, 3, 12, 0, 0).unwrap();
    let snapshots = ["parkinson stem cell treatment", "parkinson cure"]
        .iter()
        .enumerate()
        .map(|(i, term)| {
            let page = engine
                .search(&MockQuery {
                    term: term.to_string(),
                    tld: "co.uk".into(),
                    signals: [Condition::ParkinsonsDisease].into(),
                    seed: 11 + i as u64,
                })
                .page;
            extractor
                .extract_snapshot(&page, term, "co.uk", base + Duration::seconds(3 * i as i64), false)
                .unwrap()
        })
        .collect();
    Submission {
        submission_id: SubmissionId::from_u128(0x5eed),
        participant_id: participant,
        study_id,
        plugin_version: "1.0.0".into(),
        sent_at: base + Duration::seconds(10),
        tz_offset_minutes: 60,
        ui_language: "en".into(),
        order_seed: Some(7),
        snapshots,
    }
}

#[test]
fn wire_vectors() {
    let request = RegisterRequest {
        consent: true,
        survey: survey_for(Some(Condition::ParkinsonsDisease), Region::UnitedKingdom),
        plugin_version: "1.0.0".into(),
        ui_language: "en".into(),
        client_kind: ClientKind::Donor,
    };
    let server = CollectionServer::in_memory(GroupTable::bundled(), ConfigBundle::bundled()).unwrap();
    let now = Utc.with_ymd_and_hms(2019, 6, 3, 11, 0, 0).unwrap();
    let issued = server.register(&request, now).unwrap();
    // ids are random; the vector pins one
    let response = RegisterResponse {
        participant_id: ParticipantId::from_u128(0xabc),
        ..issued.clone()
    };
    let submission = sample_submission(issued.participant_id.clone(), issued.study_id);
    let ack = server.ingest(&submission).unwrap();
    assert_eq!(ack.stored, submission.snapshots.len());
    let pinned = Submission {
        participant_id: response.participant_id.clone(),
        ..submission
    };

    check("register_request.json", &serde_json::to_value(&request).unwrap());
    check("register_response.json", &serde_json::to_value(&response).unwrap());
    check("submit_request.json", &serde_json::to_value(&pinned).unwrap());
    check("submit_ack.json", &serde_json::to_value(&ack).unwrap());
}

#[test]
fn checked_in_bodies_are_accepted() {
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        return;
    }
    let read = |n: &str| std::fs::read_to_string(golden_path(n)).unwrap();
    let request: RegisterRequest = serde_json::from_str(&read("register_request.json")).unwrap();
    let _: RegisterResponse = serde_json::from_str(&read("register_response.json")).unwrap();
    let _: SubmitAck = serde_json::from_str(&read("submit_ack.json")).unwrap();
    let mut submission: Submission = serde_json::from_str(&read("submit_request.json")).unwrap();
    submission.validate().unwrap();

    let server = CollectionServer::in_memory(GroupTable::bundled(), ConfigBundle::bundled()).unwrap();
    let issued = server.register(&request, Utc::now()).unwrap();
    submission.participant_id = issued.participant_id;
    assert!(!server.ingest(&submission).unwrap().duplicate);
}
