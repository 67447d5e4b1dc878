//! Fleet planning: one clean agent per slot, staggered within each region.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentSettings, DelayRange, TargetMode};
use crate::mock_ise::request_seed;
use crate::model::{Condition, Region};
use crate::sim::survey_for;

/// Width of the window stagger offsets are drawn from.
pub const STAGGER_WINDOW_SECONDS: u32 = 15 * 60;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtraAgent {
    pub region: Region,
    #[serde(default)]
    pub condition: Option<Condition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSpec {
    /// Agents per region. Within a region, conditions are taken in
    /// precedence order, cycling.
    #[serde(default)]
    pub regions: BTreeMap<Region, u32>,
    #[serde(default)]
    pub extras: Vec<ExtraAgent>,
    #[serde(default = "default_state_root")]
    pub state_root: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_target")]
    pub target_mode: TargetMode,
}

fn default_state_root() -> PathBuf {
    PathBuf::from("fleet-state")
}

fn default_target() -> TargetMode {
    TargetMode::Live
}

impl Default for FleetSpec {
    fn default() -> Self {
        FleetSpec {
            regions: BTreeMap::new(),
            extras: Vec::new(),
            state_root: default_state_root(),
            seed: 0,
            target_mode: default_target(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedAgent {
    pub name: String,
    pub region: Region,
    pub condition: Condition,
    /// A fresh directory per agent; nothing is shared between agents.
    pub state_dir: PathBuf,
    pub survey: BTreeMap<String, String>,
    pub settings: AgentSettings,
}

/// Evenly spaced offsets within the window for `n` agents of one region,
/// shifted per region and bumped past offsets already taken elsewhere.
fn region_offsets(n: usize, shift: u32, taken: &mut BTreeSet<u32>) -> Vec<u32> {
    let step = STAGGER_WINDOW_SECONDS / n.max(1) as u32;
    (0..n as u32)
        .map(|i| {
            let mut s = (i * step + shift) % STAGGER_WINDOW_SECONDS;
            while taken.contains(&s) {
                s = (s + 1) % STAGGER_WINDOW_SECONDS;
            }
            taken.insert(s);
            s
        })
        .collect()
}

pub fn plan_fleet(spec: &FleetSpec) -> Vec<PlannedAgent> {
    let mut slots: BTreeMap<Region, Vec<Condition>> = BTreeMap::new();
    for (region, count) in &spec.regions {
        let entry = slots.entry(*region).or_default();
        entry.extend((0..*count as usize).map(|i| Condition::ALL[i % Condition::ALL.len()]));
    }
    for extra in &spec.extras {
        let entry = slots.entry(extra.region).or_default();
        let condition = extra
            .condition
            .unwrap_or(Condition::ALL[entry.len() % Condition::ALL.len()]);
        entry.push(condition);
    }

    let mut taken = BTreeSet::new();
    let mut plan = Vec::new();
    for (r, (region, conditions)) in slots.iter().enumerate() {
        let offsets = region_offsets(conditions.len(), r as u32 * 7, &mut taken);
        for (i, (condition, stagger)) in conditions.iter().zip(offsets).enumerate() {
            let name = format!("{}-{:02}", region.code(), i + 1);
            let seed = request_seed(spec.seed, &[&name]);
            plan.push(PlannedAgent {
                state_dir: spec.state_root.join(&name),
                survey: survey_for(Some(*condition), *region),
                settings: AgentSettings {
                    server_url: String::new(),
                    region: *region,
                    timezone: None,
                    target_mode: spec.target_mode.clone(),
                    retention: true,
                    plugin_version: env!("CARGO_PKG_VERSION").to_string(),
                    ui_language: "en".into(),
                    signals: BTreeSet::new(),
                    stagger_seconds: stagger,
                    delay: DelayRange::default(),
                    seed,
                },
                name,
                region: *region,
                condition: *condition,
            });
        }
    }
    plan
}
