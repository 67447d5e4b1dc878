//! Study group table and the assignment rule.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AffectedStatus, Condition, Region, SurveyResponse};

const BUNDLED_TABLE: &str = include_str!("../../data/group_table.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupRole {
    /// Affected participants of one condition in one studied region.
    Regional,
    /// Capacity-limited bucket of unaffected participants.
    Control,
    /// Affected participants living outside the studied regions; kept but not analysed regionally.
    Observation,
    /// Unaffected participants once every control bucket is full.
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyGroup {
    pub study_id: u32,
    /// Decides the group's query set.
    pub condition: Condition,
    pub role: GroupRole,
    #[serde(default)]
    pub region: Option<Region>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTable {
    pub control_capacity: u32,
    pub control_fill_order: Vec<Condition>,
    pub groups: Vec<StudyGroup>,
}

#[derive(Debug, Error)]
pub enum GroupTableError {
    #[error("group table: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("group table: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no study group for {condition} participants in {region}")]
pub struct NoEligibleGroup {
    pub condition: Condition,
    pub region: Region,
}

/// Occupancy of each control bucket, keyed by study id.
pub type AssignmentState = BTreeMap<u32, u32>;

impl GroupTable {
    pub fn from_toml(text: &str) -> Result<Self, GroupTableError> {
        let table: GroupTable = toml::from_str(text)?;
        table.validate()?;
        Ok(table)
    }

    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED_TABLE).expect("bundled group table is valid")
    }

    pub fn validate(&self) -> Result<(), GroupTableError> {
        let invalid = |m: String| Err(GroupTableError::Invalid(m));
        let mut ids = BTreeSet::new();
        for g in &self.groups {
            if !ids.insert(g.study_id) {
                return invalid(format!("duplicate study id {}", g.study_id));
            }
            if (g.role == GroupRole::Regional) != g.region.is_some() {
                return invalid(format!("group {}: only regional groups carry a region", g.study_id));
            }
        }
        for c in &self.control_fill_order {
            if self.control_bucket(*c).is_none() {
                return invalid(format!("no control bucket for {c}"));
            }
        }
        if self.control_capacity == 0 {
            return invalid("control capacity must be positive".into());
        }
        Ok(())
    }

    pub fn group(&self, study_id: u32) -> Option<&StudyGroup> {
        self.groups.iter().find(|g| g.study_id == study_id)
    }

    fn find(&self, role: GroupRole, condition: Option<Condition>, region: Option<Region>) -> Option<&StudyGroup> {
        self.groups.iter().find(|g| {
            g.role == role && condition.map_or(true, |c| g.condition == c) && g.region == region
        })
    }

    pub fn control_bucket(&self, condition: Condition) -> Option<&StudyGroup> {
        self.find(GroupRole::Control, Some(condition), None)
    }

    /// Control buckets in fill order.
    pub fn control_buckets(&self) -> Vec<u32> {
        self.control_fill_order
            .iter()
            .filter_map(|&c| self.control_bucket(c).map(|g| g.study_id))
            .collect()
    }

    /// Places one participant. Affected participants go to the regional
    /// group of their highest-precedence condition (or that condition's
    /// observation group outside the studied regions). Unaffected ones fill
    /// the first control bucket below capacity, then the overflow group.
    /// `state` is updated in place for control placements.
    pub fn assign(
        &self,
        survey: &SurveyResponse,
        state: &mut AssignmentState,
    ) -> Result<u32, NoEligibleGroup> {
        if let Some(condition) = primary_condition(survey) {
            let region = survey.residence;
            let group = if region == Region::Other {
                self.find(GroupRole::Observation, Some(condition), None)
            } else {
                self.find(GroupRole::Regional, Some(condition), Some(region))
            };
            return group
                .map(|g| g.study_id)
                .ok_or(NoEligibleGroup { condition, region });
        }
        for bucket in self.control_buckets() {
            let occupancy = state.entry(bucket).or_insert(0);
            if *occupancy < self.control_capacity {
                *occupancy += 1;
                return Ok(bucket);
            }
        }
        self.find(GroupRole::Overflow, None, None)
            .map(|g| g.study_id)
            .ok_or(NoEligibleGroup {
                condition: self.control_fill_order.first().copied().unwrap_or(Condition::ParkinsonsDisease),
                region: survey.residence,
            })
    }
}

/// Highest-precedence condition the participant is affected by.
pub fn primary_condition(survey: &SurveyResponse) -> Option<Condition> {
    let status = |c: Condition| -> AffectedStatus {
        match c {
            Condition::ParkinsonsDisease => survey.pd_status,
            Condition::MultipleSclerosis => survey.ms_status,
            Condition::Diabetes => survey.db_status,
        }
    };
    Condition::ALL.into_iter().find(|&c| status(c).is_affected())
}
