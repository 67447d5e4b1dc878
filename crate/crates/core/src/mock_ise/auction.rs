//! Generalized second-price auction ranked by AdRank (bid × quality).

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::Condition;

/// How an ad's link is rendered on the result page.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkStyle {
    /// Plain link to the landing page.
    #[default]
    Direct,
    /// Click relay carrying the landing URL in a query parameter.
    Relay,
    /// Click relay with no recoverable destination.
    Obfuscated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Creative {
    pub title: String,
    pub content: String,
    pub display_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdCandidate {
    /// Canonical host of the advertiser's landing page.
    pub advertiser_host: String,
    pub creative: Creative,
    #[serde(default = "default_path")]
    pub landing_path: String,
    pub bid: f64,
    pub quality: f64,
    /// Conditions this ad is targeted at; `None` means untargeted.
    #[serde(default)]
    pub targeting: Option<BTreeSet<Condition>>,
    #[serde(default)]
    pub link: LinkStyle,
}

fn default_path() -> String {
    "/".to_string()
}

impl AdCandidate {
    pub fn ad_rank(&self) -> f64 {
        self.bid * self.quality
    }

    pub fn landing_url(&self) -> String {
        format!("https://{}{}", self.advertiser_host, self.landing_path)
    }

    pub fn is_targeted(&self) -> bool {
        self.targeting.as_ref().is_some_and(|t| !t.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRequest {
    pub query: String,
    pub reserve_price: f64,
    pub adrank_threshold: f64,
    pub slot_count: usize,
    #[serde(default)]
    pub user_signals: BTreeSet<Condition>,
}

/// One sold slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionWin {
    /// Index into the candidate list passed to [`run_auction`].
    pub candidate: usize,
    /// 1-based slot position.
    pub position: usize,
    pub ad_rank: f64,
    pub price: f64,
}

fn by_rank(candidates: &[AdCandidate]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        let (ca, cb) = (&candidates[a], &candidates[b]);
        cb.ad_rank()
            .total_cmp(&ca.ad_rank())
            .then_with(|| ca.advertiser_host.cmp(&cb.advertiser_host))
            .then(a.cmp(&b))
    }
}

/// Runs the slot auction.
///
/// Candidates whose AdRank falls below the threshold, or whose bid does not
/// exceed the reserve, are rejected. The rest are ranked by AdRank (ties by
/// advertiser host) and the top `slot_count` win. Each winner pays the
/// smallest bid that would keep its position against the next eligible
/// candidate, `AdRank_next / quality`, floored at the reserve; a winner with
/// no eligible candidate below it pays the reserve.
pub fn run_auction(request: &SlotRequest, candidates: &[AdCandidate]) -> Vec<AuctionWin> {
    let mut eligible: Vec<usize> = (0..candidates.len())
        .filter(|&i| {
            let c = &candidates[i];
            c.bid > request.reserve_price && c.ad_rank() >= request.adrank_threshold
        })
        .collect();
    eligible.sort_by(by_rank(candidates));

    eligible
        .iter()
        .take(request.slot_count)
        .enumerate()
        .map(|(slot, &i)| {
            let winner = &candidates[i];
            let price = match eligible.get(slot + 1) {
                Some(&next) => (candidates[next].ad_rank() / winner.quality)
                    .max(request.reserve_price)
                    .min(winner.bid),
                None => request.reserve_price,
            };
            AuctionWin {
                candidate: i,
                position: slot + 1,
                ad_rank: winner.ad_rank(),
                price,
            }
        })
        .collect()
}

/// Keeps untargeted candidates and targeted ones whose targeting overlaps the signals.
pub fn targeted_candidate_filter(
    candidates: &[AdCandidate],
    user_signals: &BTreeSet<Condition>,
) -> Vec<AdCandidate> {
    candidates
        .iter()
        .filter(|c| match &c.targeting {
            Some(t) if !t.is_empty() => !t.is_disjoint(user_signals),
            _ => true,
        })
        .cloned()
        .collect()
}
