//! PageRank over a synthetic web graph, in the non-normalised form
//! `PR(A) = (1 - d) + d * Σ PR(T) / C(T)` over pages `T` linking to `A`.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebPage {
    pub url: String,
    pub title: String,
    pub content: String,
    /// Present for news pages, which may appear as top stories.
    #[serde(default)]
    pub author: Option<String>,
    #[serde(default)]
    pub links: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebGraph {
    pub pages: Vec<WebPage>,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_damping() -> f64 {
    0.85
}
fn default_tolerance() -> f64 {
    1e-12
}
fn default_max_iterations() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PageRankError {
    #[error("damping {0} outside (0, 1)")]
    InvalidDamping(f64),
    #[error("tolerance {0} must be positive")]
    InvalidTolerance(f64),
    #[error("no convergence after {iterations} iterations (last change {last_change})")]
    NonConvergence { iterations: usize, last_change: f64 },
    #[error("duplicate page url {0:?}")]
    DuplicateUrl(String),
}

impl WebGraph {
    pub fn new(pages: Vec<WebPage>) -> Self {
        WebGraph {
            pages,
            damping: default_damping(),
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
        }
    }

    /// Distinct in-graph link targets of each page, as indices.
    /// Links to urls outside the graph are ignored.
    pub fn adjacency(&self) -> Result<Vec<Vec<usize>>, PageRankError> {
        let mut index = HashMap::with_capacity(self.pages.len());
        for (i, p) in self.pages.iter().enumerate() {
            if index.insert(p.url.as_str(), i).is_some() {
                return Err(PageRankError::DuplicateUrl(p.url.clone()));
            }
        }
        Ok(self
            .pages
            .iter()
            .map(|p| {
                p.links
                    .iter()
                    .filter_map(|l| index.get(l.as_str()).copied())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect()
            })
            .collect())
    }
}

/// Iterates the PageRank equation from `1 - d` until the largest per-page
/// change drops below the tolerance. Pages without outgoing links pass
/// nothing on. Scores are indexed like `graph.pages`.
pub fn compute_pagerank(graph: &WebGraph) -> Result<Vec<f64>, PageRankError> {
    let d = graph.damping;
    if !(d > 0.0 && d < 1.0) {
        return Err(PageRankError::InvalidDamping(d));
    }
    if !(graph.tolerance > 0.0) {
        return Err(PageRankError::InvalidTolerance(graph.tolerance));
    }
    let out = graph.adjacency()?;
    let n = out.len();
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (src, targets) in out.iter().enumerate() {
        for &t in targets {
            incoming[t].push(src);
        }
    }

    let mut rank = vec![1.0 - d; n];
    let mut next = vec![0.0; n];
    let mut last_change = f64::INFINITY;
    for _ in 0..graph.max_iterations {
        for (a, sources) in incoming.iter().enumerate() {
            let inflow: f64 = sources.iter().map(|&t| rank[t] / out[t].len() as f64).sum();
            next[a] = (1.0 - d) + d * inflow;
        }
        last_change = rank
            .iter()
            .zip(&next)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut rank, &mut next);
        if last_change < graph.tolerance {
            return Ok(rank);
        }
    }
    Err(PageRankError::NonConvergence {
        iterations: graph.max_iterations,
        last_change,
    })
}
