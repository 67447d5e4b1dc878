//! Result page markup. The layout matches the bundled extraction rules, so
//! every rendered page extracts back to the content it was built from.

use std::collections::BTreeSet;
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::auction::{run_auction, AdCandidate, AuctionWin, LinkStyle, SlotRequest};
use super::pagerank::{compute_pagerank, PageRankError, WebGraph, WebPage};
use crate::model::{AdRecord, OrganicResult, TopStory, UNKNOWN_HOST};

pub const DEFAULT_RESULTS_PER_PAGE: usize = 10;
pub const MAX_TOP_STORIES: usize = 3;
const RELAY_BASE: &str = "https://www.googleadservices.com/pagead/aclk";

/// What a page shows, recorded independently of its markup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlacedContent {
    pub ads: Vec<AdRecord>,
    pub results: Vec<OrganicResult>,
    pub top_stories: Vec<TopStory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSerp {
    pub page: String,
    pub placed: PlacedContent,
    pub wins: Vec<AuctionWin>,
}

/// A web graph with its PageRank scores computed once.
#[derive(Debug, Clone)]
pub struct RankedGraph {
    graph: WebGraph,
    ranks: Vec<f64>,
    tokens: Vec<BTreeSet<String>>,
    pub results_per_page: usize,
}

impl RankedGraph {
    pub fn new(graph: WebGraph) -> Result<Self, PageRankError> {
        let ranks = compute_pagerank(&graph)?;
        let tokens = graph
            .pages
            .iter()
            .map(|p| tokens(&format!("{} {}", p.title, p.content)))
            .collect();
        Ok(RankedGraph {
            graph,
            ranks,
            tokens,
            results_per_page: DEFAULT_RESULTS_PER_PAGE,
        })
    }

    pub fn graph(&self) -> &WebGraph {
        &self.graph
    }

    pub fn rank(&self, index: usize) -> f64 {
        self.ranks[index]
    }

    /// Pages sharing at least one token with the query, best first:
    /// PageRank, then number of matching tokens, then url.
    pub fn matching(&self, query: &str) -> Vec<(usize, usize)> {
        let q = tokens(query);
        let mut hits: Vec<(usize, usize)> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (i, q.intersection(t).count()))
            .filter(|&(_, n)| n > 0)
            .collect();
        hits.sort_by(|&(a, na), &(b, nb)| {
            self.ranks[b]
                .total_cmp(&self.ranks[a])
                .then(nb.cmp(&na))
                .then_with(|| self.graph.pages[a].url.cmp(&self.graph.pages[b].url))
        });
        hits
    }
}

/// Lowercased alphanumeric words of three or more characters.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 3)
        .map(str::to_lowercase)
        .collect()
}

/// Text as it survives a trip through the page: control characters other
/// than tab and newline removed, surrounding whitespace trimmed.
pub fn normalize_text(text: &str) -> String {
    text.chars()
        .filter(|&c| !c.is_control() || c == '\n' || c == '\t')
        .collect::<String>()
        .trim()
        .to_string()
}

/// Runs the auction and organic ranking for `query` and renders the page.
/// The seed picks top stories and relay tokens.
pub fn render_serp(
    query: &str,
    request: &SlotRequest,
    candidates: &[AdCandidate],
    graph: &RankedGraph,
    seed: u64,
) -> RenderedSerp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wins = run_auction(request, candidates);

    let ads = wins
        .iter()
        .map(|w| {
            let c = &candidates[w.candidate];
            let (url, resolved_host) = match c.link {
                LinkStyle::Direct => (c.landing_url(), c.advertiser_host.clone()),
                LinkStyle::Relay => {
                    let landing: String =
                        url::form_urlencoded::byte_serialize(c.landing_url().as_bytes()).collect();
                    (
                        format!("{RELAY_BASE}?sa=L&ai={:016x}&adurl={landing}", rng.gen::<u64>()),
                        c.advertiser_host.clone(),
                    )
                }
                LinkStyle::Obfuscated => (
                    format!(
                        "{RELAY_BASE}?sa=L&ai={:016x}&sig={:016x}",
                        rng.gen::<u64>(),
                        rng.gen::<u64>()
                    ),
                    UNKNOWN_HOST.to_string(),
                ),
            };
            AdRecord {
                name: normalize_text(&c.creative.display_url),
                title: normalize_text(&c.creative.title),
                url,
                content: normalize_text(&c.creative.content),
                resolved_host,
            }
        })
        .collect();

    let pages = &graph.graph().pages;
    let matching = graph.matching(query);
    let results = matching
        .iter()
        .take(graph.results_per_page)
        .zip(1..)
        .map(|(&(i, _), position)| OrganicResult {
            title: normalize_text(&pages[i].title),
            content: normalize_text(&pages[i].content),
            url: normalize_text(&pages[i].url),
            position,
        })
        .collect();

    let news: Vec<&WebPage> = matching
        .iter()
        .map(|&(i, _)| &pages[i])
        .filter(|p| p.author.is_some())
        .collect();
    let count = rng.gen_range(0..=MAX_TOP_STORIES).min(news.len());
    let top_stories = news
        .choose_multiple(&mut rng, count)
        .zip(1..)
        .map(|(p, position)| TopStory {
            title: normalize_text(&p.title),
            author: normalize_text(p.author.as_deref().unwrap_or_default()),
            url: normalize_text(&p.url),
            position,
        })
        .collect();

    let placed = PlacedContent {
        ads,
        results,
        top_stories,
    };
    RenderedSerp {
        page: render_page(query, &placed),
        placed,
        wins,
    }
}

/// Markup for already placed content.
pub fn render_page(query: &str, placed: &PlacedContent) -> String {
    let mut out = String::with_capacity(4096);
    let q = escape(query);
    let _ = write!(
        out,
        "<!doctype html><html lang=\"en\"><head><meta charset=\"UTF-8\"><title>{q} - Search</title></head><body>\n\
         <div id=\"searchform\"><form action=\"/search\"><input name=\"q\" value=\"{q}\"></form></div>\n"
    );
    if !placed.ads.is_empty() {
        out.push_str("<div id=\"tads\" aria-label=\"Ads\"><h2>Ads</h2><ol>\n");
        for ad in &placed.ads {
            let _ = writeln!(
                out,
                "<li class=\"ads-ad\"><div class=\"ad_cclk\"><a href=\"{}\"><h3>{}</h3></a>\
                 <div class=\"ads-visurl\"><span>Ad</span><cite>{}</cite></div></div>\
                 <div class=\"ads-creative\">{}</div></li>",
                escape(&ad.url),
                escape(&ad.title),
                escape(&ad.name),
                escape(&ad.content)
            );
        }
        out.push_str("</ol></div>\n");
    }
    if !placed.top_stories.is_empty() {
        out.push_str("<g-section-with-header><h3>Top stories</h3><g-scrolling-carousel>\n");
        for s in &placed.top_stories {
            let _ = writeln!(
                out,
                "<g-inner-card><a class=\"story-link\" href=\"{}\"><div role=\"heading\" aria-level=\"3\">{}</div></a>\
                 <cite class=\"story-source\">{}</cite></g-inner-card>",
                escape(&s.url),
                escape(&s.title),
                escape(&s.author)
            );
        }
        out.push_str("</g-scrolling-carousel></g-section-with-header>\n");
    }
    out.push_str("<div id=\"search\"><div id=\"rso\">\n");
    for r in &placed.results {
        let _ = writeln!(
            out,
            "<div class=\"g\"><div class=\"rc\"><div class=\"r\"><a href=\"{}\"><h3 class=\"LC20lb\">{}</h3></a></div>\
             <div class=\"s\"><span class=\"st\">{}</span></div></div></div>",
            escape(&r.url),
            escape(&r.title),
            escape(&r.content)
        );
    }
    out.push_str("</div></div></body></html>\n");
    out
}

/// Interstitial served instead of results when a request is blocked.
pub fn render_block_page(query: &str) -> String {
    format!(
        "<!doctype html><html><head><title>Sorry...</title></head><body>\
         <div>Our systems have detected unusual traffic from your computer network.</div>\
         <form id=\"captcha-form\" action=\"/sorry/index\"><input type=\"hidden\" name=\"q\" value=\"{}\">\
         <div class=\"g-recaptcha\"></div></form></body></html>\n",
        escape(query)
    )
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}
