//! Deterministic stand-in for the search engine: a sealed ad auction, a
//! PageRank-ordered web graph and a renderer producing pages in the live
//! engine's markup.

pub mod auction;
mod engine;
pub mod pagerank;
pub mod render;

pub use auction::{
    run_auction, targeted_candidate_filter, AdCandidate, AuctionWin, Creative, LinkStyle,
    SlotRequest,
};
pub use engine::{request_seed, EngineSettings, InventoryAd, MockConfig, MockEngine, MockError, MockQuery, MockResponse};
pub use pagerank::{compute_pagerank, PageRankError, WebGraph, WebPage};
pub use render::{
    normalize_text, render_block_page, render_page, render_serp, PlacedContent, RankedGraph,
    RenderedSerp,
};
