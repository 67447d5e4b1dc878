//! Registration survey: typed answers and validation of raw form input.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Region;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffectedStatus {
    Patient,
    Carer,
    No,
}

impl AffectedStatus {
    pub fn is_affected(self) -> bool {
        !matches!(self, AffectedStatus::No)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgeBand {
    #[serde(rename = "18-29")]
    From18To29,
    #[serde(rename = "30-39")]
    From30To39,
    #[serde(rename = "40-49")]
    From40To49,
    #[serde(rename = "50-59")]
    From50To59,
    #[serde(rename = "60-69")]
    From60To69,
    #[serde(rename = "69+")]
    Over69,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    Other,
    NotSaid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsageFrequency {
    /// Daily, more than twice a day.
    DailyGt2,
    /// Daily, at most twice a day.
    DailyLe2,
    Weekly,
    Monthly,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum City {
    Named(String),
    NotSaid,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub pd_status: AffectedStatus,
    pub ms_status: AffectedStatus,
    pub db_status: AffectedStatus,
    pub researcher: bool,
    pub residence: Region,
    pub age_band: AgeBand,
    pub gender: Gender,
    pub device_use: UsageFrequency,
    pub search_use: UsageFrequency,
    pub paid_or_inquired_sct: bool,
    pub city: City,
}

impl SurveyResponse {
    /// Inverse of [`validate_survey`]: the canonical field map for this response.
    pub fn to_field_map(&self) -> BTreeMap<String, String> {
        fn code<T: Serialize>(v: &T) -> String {
            match serde_json::to_value(v) {
                Ok(serde_json::Value::String(s)) => s,
                other => panic!("survey enum serialised to non-string {other:?}"),
            }
        }
        let yes_no = |b: bool| if b { "yes" } else { "no" }.to_string();
        let mut map = BTreeMap::new();
        map.insert("pd_status".into(), code(&self.pd_status));
        map.insert("ms_status".into(), code(&self.ms_status));
        map.insert("db_status".into(), code(&self.db_status));
        map.insert("researcher".into(), yes_no(self.researcher));
        map.insert("residence".into(), self.residence.code().to_string());
        map.insert("age_band".into(), code(&self.age_band));
        map.insert("gender".into(), code(&self.gender));
        map.insert("device_use".into(), code(&self.device_use));
        map.insert("search_use".into(), code(&self.search_use));
        map.insert("paid_or_inquired_sct".into(), yes_no(self.paid_or_inquired_sct));
        match &self.city {
            City::Named(name) => {
                map.insert("city".into(), name.clone());
            }
            City::NotSaid => {
                map.insert("city_choice".into(), "not_said".into());
            }
        }
        map
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldError {
    #[error("missing field {name}")]
    MissingField { name: String },
    #[error("invalid choice {value:?} for {name}")]
    InvalidChoice { name: String, value: String },
}

/// Every field-level problem found in one survey submission.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub struct SurveyErrors(pub Vec<FieldError>);

impl fmt::Display for SurveyErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "survey invalid: {}", parts.join("; "))
    }
}

/// Normalises a raw answer for comparison: lowercase, trimmed, trailing '.' removed,
/// typographic apostrophes folded.
fn norm(raw: &str) -> String {
    raw.trim()
        .trim_end_matches('.')
        .replace('\u{2019}', "'")
        .to_lowercase()
}

fn affected(v: &str) -> Option<AffectedStatus> {
    match norm(v).as_str() {
        "patient" | "i'm a patient" => Some(AffectedStatus::Patient),
        "carer" | "i'm a carer" => Some(AffectedStatus::Carer),
        "no" => Some(AffectedStatus::No),
        _ => None,
    }
}

fn yes_no(v: &str) -> Option<bool> {
    match norm(v).as_str() {
        "yes" | "true" => Some(true),
        "no" | "false" => Some(false),
        _ => None,
    }
}

fn residence(v: &str) -> Option<Region> {
    match norm(v).as_str() {
        "australia" => Some(Region::Australia),
        "canada" => Some(Region::Canada),
        "united kingdom" => Some(Region::UnitedKingdom),
        "united states" | "united states of america" => Some(Region::UnitedStates),
        code => code.parse().ok(),
    }
}

fn age_band(v: &str) -> Option<AgeBand> {
    match norm(v).as_str() {
        "18-29" => Some(AgeBand::From18To29),
        "30-39" => Some(AgeBand::From30To39),
        "40-49" => Some(AgeBand::From40To49),
        "50-59" => Some(AgeBand::From50To59),
        "60-69" => Some(AgeBand::From60To69),
        "69+" => Some(AgeBand::Over69),
        _ => None,
    }
}

fn gender(v: &str) -> Option<Gender> {
    match norm(v).as_str() {
        "female" => Some(Gender::Female),
        "male" => Some(Gender::Male),
        "other" => Some(Gender::Other),
        "not_said" | "prefer not to say" => Some(Gender::NotSaid),
        _ => None,
    }
}

fn frequency(v: &str) -> Option<UsageFrequency> {
    match norm(v).as_str() {
        "daily_gt2" | "daily (more than 2 times a day)" => Some(UsageFrequency::DailyGt2),
        "daily_le2" | "daily (less than 2 times a day)" => Some(UsageFrequency::DailyLe2),
        "weekly" => Some(UsageFrequency::Weekly),
        "monthly" => Some(UsageFrequency::Monthly),
        _ => None,
    }
}

fn is_not_said(v: &str) -> bool {
    matches!(norm(v).as_str(), "not_said" | "prefer not to say")
}

fn city_name(v: &str) -> Option<String> {
    let name = v.trim();
    let ok = !name.is_empty()
        && name.chars().any(char::is_alphabetic)
        && name
            .chars()
            .all(|c| c.is_alphabetic() || matches!(c, ' ' | '-' | '\'' | '.'));
    ok.then(|| name.to_string())
}

/// Validates a raw survey form (field name to answer) into a [`SurveyResponse`].
///
/// Answers may be given as short codes (`patient`, `daily_gt2`, `uk`) or as the
/// labels shown on the form. The city question is answered either by `city`
/// or by `city_choice = not_said`.
pub fn validate_survey(raw: &BTreeMap<String, String>) -> Result<SurveyResponse, SurveyErrors> {
    let mut errors = Vec::new();
    let mut field = |name: &str, parse: &dyn Fn(&str) -> bool| -> Option<String> {
        match raw.get(name) {
            None => {
                errors.push(FieldError::MissingField { name: name.into() });
                None
            }
            Some(v) if !parse(v) => {
                errors.push(FieldError::InvalidChoice {
                    name: name.into(),
                    value: v.clone(),
                });
                None
            }
            Some(v) => Some(v.clone()),
        }
    };

    let pd = field("pd_status", &|v| affected(v).is_some());
    let ms = field("ms_status", &|v| affected(v).is_some());
    let db = field("db_status", &|v| affected(v).is_some());
    let researcher = field("researcher", &|v| yes_no(v).is_some());
    let res = field("residence", &|v| residence(v).is_some());
    let age = field("age_band", &|v| age_band(v).is_some());
    let gen = field("gender", &|v| gender(v).is_some());
    let device = field("device_use", &|v| frequency(v).is_some());
    let search = field("search_use", &|v| frequency(v).is_some());
    let paid = field("paid_or_inquired_sct", &|v| yes_no(v).is_some());

    let city = match (raw.get("city_choice"), raw.get("city")) {
        (Some(choice), _) if is_not_said(choice) => Some(City::NotSaid),
        (Some(choice), _) if !matches!(norm(choice).as_str(), "city" | "text") => {
            errors.push(FieldError::InvalidChoice {
                name: "city_choice".into(),
                value: choice.clone(),
            });
            None
        }
        (_, Some(c)) if is_not_said(c) => Some(City::NotSaid),
        (_, Some(c)) => match city_name(c) {
            Some(name) => Some(City::Named(name)),
            None => {
                errors.push(FieldError::InvalidChoice {
                    name: "city".into(),
                    value: c.clone(),
                });
                None
            }
        },
        (_, None) => {
            errors.push(FieldError::MissingField {
                name: "city".into(),
            });
            None
        }
    };

    if !errors.is_empty() {
        return Err(SurveyErrors(errors));
    }
    // Every field parsed above, so the unwraps below cannot fail.
    Ok(SurveyResponse {
        pd_status: affected(&pd.unwrap()).unwrap(),
        ms_status: affected(&ms.unwrap()).unwrap(),
        db_status: affected(&db.unwrap()).unwrap(),
        researcher: yes_no(&researcher.unwrap()).unwrap(),
        residence: residence(&res.unwrap()).unwrap(),
        age_band: age_band(&age.unwrap()).unwrap(),
        gender: gender(&gen.unwrap()).unwrap(),
        device_use: frequency(&device.unwrap()).unwrap(),
        search_use: frequency(&search.unwrap()).unwrap(),
        paid_or_inquired_sct: yes_no(&paid.unwrap()).unwrap(),
        city: city.unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn form(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn full() -> BTreeMap<String, String> {
        form(&[
            ("pd_status", "I'm a patient."),
            ("ms_status", "No"),
            ("db_status", "I'm a carer."),
            ("researcher", "No"),
            ("residence", "United Kingdom"),
            ("age_band", "60-69"),
            ("gender", "Prefer not to say"),
            ("device_use", "Daily (More than 2 times a day)"),
            ("search_use", "Weekly"),
            ("paid_or_inquired_sct", "Yes"),
            ("city", "Edinburgh"),
        ])
    }

    #[test]
    fn all_questions_answered_with_form_labels() {
        let s = validate_survey(&full()).unwrap();
        assert_eq!(s.pd_status, AffectedStatus::Patient);
        assert_eq!(s.db_status, AffectedStatus::Carer);
        assert_eq!(s.residence, Region::UnitedKingdom);
        assert_eq!(s.gender, Gender::NotSaid);
        assert_eq!(s.device_use, UsageFrequency::DailyGt2);
        assert!(s.paid_or_inquired_sct);
        assert_eq!(s.city, City::Named("Edinburgh".into()));
    }

    #[test]
    fn city_prefer_not_to_say() {
        let mut raw = full();
        raw.remove("city");
        raw.insert("city_choice".into(), "Prefer not to say".into());
        assert_eq!(validate_survey(&raw).unwrap().city, City::NotSaid);
    }

    #[test]
    fn unlisted_age_band_is_invalid() {
        let mut raw = full();
        raw.insert("age_band".into(), "17-20".into());
        let err = validate_survey(&raw).unwrap_err();
        assert_eq!(
            err.0,
            vec![FieldError::InvalidChoice {
                name: "age_band".into(),
                value: "17-20".into()
            }]
        );
    }

    #[test]
    fn reports_every_missing_field() {
        let err = validate_survey(&BTreeMap::new()).unwrap_err();
        assert_eq!(err.0.len(), 11);
        assert!(err
            .0
            .iter()
            .all(|e| matches!(e, FieldError::MissingField { .. })));
    }

    #[test]
    fn city_must_be_letters() {
        let mut raw = full();
        raw.insert("city".into(), "12345".into());
        assert!(validate_survey(&raw).is_err());
        raw.insert("city".into(), "  ".into());
        assert!(validate_survey(&raw).is_err());
        raw.insert("city".into(), "Saint-Jérôme".into());
        assert!(validate_survey(&raw).is_ok());
    }

    #[test]
    fn field_map_round_trip() {
        let s = validate_survey(&full()).unwrap();
        assert_eq!(validate_survey(&s.to_field_map()).unwrap(), s);
        let mut raw = full();
        raw.remove("city");
        raw.insert("city_choice".into(), "not_said".into());
        let s = validate_survey(&raw).unwrap();
        assert_eq!(validate_survey(&s.to_field_map()).unwrap(), s);
    }
}
