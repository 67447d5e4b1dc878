use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::auction::{targeted_candidate_filter, AdCandidate, AuctionWin, SlotRequest};
use super::pagerank::{PageRankError, WebGraph};
use super::render::{render_block_page, render_serp, PlacedContent, RankedGraph, DEFAULT_RESULTS_PER_PAGE};
use crate::model::{canonicalize_host, Condition};

const BUNDLED_CONFIG: &str = include_str!("../../data/mock_engine.toml");

#[derive(Debug, Error)]
pub enum MockError {
    #[error("mock engine config: {0}")]
    Config(#[from] toml::de::Error),
    #[error("ad for {host:?}: {reason}")]
    InvalidAd { host: String, reason: String },
    #[error("invalid engine setting: {0}")]
    InvalidSetting(String),
    #[error(transparent)]
    PageRank(#[from] PageRankError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSettings {
    pub reserve_price: f64,
    pub adrank_threshold: f64,
    pub slot_count: usize,
    #[serde(default = "default_results")]
    pub results_per_page: usize,
    /// Probability that a request is answered with a block page.
    #[serde(default)]
    pub block_rate: f64,
    /// When off, targeted ads compete regardless of the searcher's signals.
    #[serde(default = "yes")]
    pub targeting_enabled: bool,
}

fn default_results() -> usize {
    DEFAULT_RESULTS_PER_PAGE
}
fn yes() -> bool {
    true
}

/// An inventory entry: the auction candidate plus when it enters auctions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryAd {
    #[serde(flatten)]
    pub candidate: AdCandidate,
    /// Substrings of the query that trigger this ad; empty matches any query.
    #[serde(default)]
    pub keywords: Vec<String>,
    /// Chance of entering a given auction when triggered.
    #[serde(default = "one")]
    pub participation: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockConfig {
    pub engine: EngineSettings,
    #[serde(default)]
    pub ads: Vec<InventoryAd>,
    pub graph: WebGraph,
}

impl MockConfig {
    pub fn from_toml(text: &str) -> Result<Self, MockError> {
        let config: MockConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED_CONFIG).expect("bundled mock engine config is valid")
    }

    pub fn validate(&self) -> Result<(), MockError> {
        let e = &self.engine;
        if !(0.0..=1.0).contains(&e.block_rate) {
            return Err(MockError::InvalidSetting(format!("block_rate {}", e.block_rate)));
        }
        if !(e.reserve_price >= 0.0) || !(e.adrank_threshold >= 0.0) {
            return Err(MockError::InvalidSetting("negative reserve or threshold".into()));
        }
        for ad in &self.ads {
            let c = &ad.candidate;
            let bad = |reason: &str| MockError::InvalidAd {
                host: c.advertiser_host.clone(),
                reason: reason.to_string(),
            };
            if canonicalize_host(&c.advertiser_host) != c.advertiser_host {
                return Err(bad("advertiser host is not canonical"));
            }
            if !c.landing_path.starts_with('/') {
                return Err(bad("landing path must start with '/'"));
            }
            if !(c.bid > 0.0 && c.bid.is_finite()) {
                return Err(bad("bid must be positive"));
            }
            if !(c.quality > 0.0 && c.quality <= 1.0) {
                return Err(bad("quality must be in (0, 1]"));
            }
            if !(0.0..=1.0).contains(&ad.participation) {
                return Err(bad("participation must be in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// One search request as seen by the engine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockQuery {
    pub term: String,
    #[serde(default = "default_tld")]
    pub tld: String,
    #[serde(default)]
    pub signals: BTreeSet<Condition>,
    #[serde(default)]
    pub seed: u64,
}

fn default_tld() -> String {
    "com".to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockResponse {
    pub page: String,
    pub blocked: bool,
    /// Empty for block pages.
    pub placed: PlacedContent,
    pub wins: Vec<AuctionWin>,
}

#[derive(Debug, Clone)]
pub struct MockEngine {
    settings: EngineSettings,
    ads: Vec<InventoryAd>,
    graph: RankedGraph,
}

impl MockEngine {
    pub fn new(config: MockConfig) -> Result<Self, MockError> {
        config.validate()?;
        let mut graph = RankedGraph::new(config.graph)?;
        graph.results_per_page = config.engine.results_per_page;
        Ok(MockEngine {
            settings: config.engine,
            ads: config.ads,
            graph,
        })
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    pub fn set_targeting(&mut self, enabled: bool) {
        self.settings.targeting_enabled = enabled;
    }

    pub fn set_block_rate(&mut self, rate: f64) {
        self.settings.block_rate = rate.clamp(0.0, 1.0);
    }

    /// Answers one request; identical queries (seed included) yield identical pages.
    pub fn search(&self, query: &MockQuery) -> MockResponse {
        let mut rng = ChaCha8Rng::seed_from_u64(query.seed);
        if rng.gen::<f64>() < self.settings.block_rate {
            return MockResponse {
                page: render_block_page(&query.term),
                blocked: true,
                placed: PlacedContent::default(),
                wins: Vec::new(),
            };
        }
        let term = query.term.to_lowercase();
        let triggered: Vec<AdCandidate> = self
            .ads
            .iter()
            .filter(|ad| {
                ad.keywords.is_empty()
                    || ad.keywords.iter().any(|k| term.contains(&k.to_lowercase()))
            })
            // draw for every triggered ad so the stream does not depend on earlier outcomes
            .filter(|ad| rng.gen::<f64>() < ad.participation)
            .map(|ad| ad.candidate.clone())
            .collect();
        let pool = if self.settings.targeting_enabled {
            targeted_candidate_filter(&triggered, &query.signals)
        } else {
            triggered
        };
        let request = SlotRequest {
            query: query.term.clone(),
            reserve_price: self.settings.reserve_price,
            adrank_threshold: self.settings.adrank_threshold,
            slot_count: self.settings.slot_count,
            user_signals: query.signals.clone(),
        };
        let r = render_serp(&query.term, &request, &pool, &self.graph, rng.gen());
        MockResponse {
            page: r.page,
            blocked: false,
            placed: r.placed,
            wins: r.wins,
        }
    }
}

/// Stable request seed from a base seed and identifying parts.
pub fn request_seed(base: u64, parts: &[&str]) -> u64 {
    // FNV-1a over the parts, separated so ("ab","c") != ("a","bc")
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ base;
    for part in parts {
        for b in part.bytes().chain([0xff]) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    // splitmix64 finaliser
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}
