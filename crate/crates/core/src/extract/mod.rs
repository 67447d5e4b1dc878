//! Rule-driven extraction of result pages into snapshots.
//!
//! Extraction is static: the page is parsed as an HTML document and the
//! rule set's selectors pick out ad, organic-result and top-story containers
//! and their fields. Malformed markup never fails; selector drift is
//! reported as [`ExtractError::RuleSetMismatch`] with the degraded snapshot.

mod resolve;
mod rules;
pub mod selector;

use chrono::{DateTime, Utc};
use scraper::{ElementRef, Html};
use thiserror::Error;

pub use resolve::{resolve_ad_destination, RelayConfig};
pub use rules::{RuleError, AD_FIELDS, RESULT_FIELDS, STORY_FIELDS};

use crate::model::{AdRecord, ExtractionRuleSet, OrganicResult, SerpSnapshot, TopStory};
use rules::{CompiledRules, CompiledSection};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    /// Nothing matched on a long, unblocked page: the markup has likely
    /// drifted away from the rules. Carries the (empty) snapshot.
    #[error("no rule matched on a {page_len}-character page (rules v{rules_version})")]
    RuleSetMismatch {
        page_len: usize,
        rules_version: u64,
        snapshot: Box<SerpSnapshot>,
    },
}

/// A compiled rule set, shareable across threads.
#[derive(Debug, Clone)]
pub struct Extractor {
    rules: ExtractionRuleSet,
    compiled: CompiledRules,
    relays: RelayConfig,
    signatures: Vec<String>,
}

impl Extractor {
    pub fn new(rules: ExtractionRuleSet) -> Result<Self, RuleError> {
        let compiled = CompiledRules::compile(&rules)?;
        let relays = RelayConfig {
            relay_hosts: rules.relay_hosts.iter().map(|h| h.to_ascii_lowercase()).collect(),
            param_allowlist: rules.redirect_param_allowlist.clone(),
        };
        let signatures = rules
            .block_signatures
            .iter()
            .map(|s| s.to_lowercase())
            .filter(|s| !s.is_empty())
            .collect();
        Ok(Extractor {
            rules,
            compiled,
            relays,
            signatures,
        })
    }

    pub fn rules(&self) -> &ExtractionRuleSet {
        &self.rules
    }

    pub fn relays(&self) -> &RelayConfig {
        &self.relays
    }

    /// True iff the page carries one of the configured block signatures.
    pub fn detect_block_page(&self, page: &str) -> bool {
        if page.is_empty() || self.signatures.is_empty() {
            return false;
        }
        let lowered = page.to_lowercase();
        self.signatures.iter().any(|sig| lowered.contains(sig.as_str()))
    }

    pub fn resolve_ad_destination(&self, href: &str) -> String {
        resolve_ad_destination(href, &self.relays)
    }

    /// Extracts one query's snapshot. `retain_raw` attaches the page source.
    pub fn extract_snapshot(
        &self,
        page: &str,
        query: &str,
        tld: &str,
        now: DateTime<Utc>,
        retain_raw: bool,
    ) -> Result<SerpSnapshot, ExtractError> {
        let raw_page = retain_raw.then(|| page.to_string());
        if self.detect_block_page(page) {
            return Ok(SerpSnapshot {
                raw_page,
                ..SerpSnapshot::blocked(query, tld, now)
            });
        }

        let doc = Html::parse_document(page);
        let ads: Vec<AdRecord> = rows(&doc, &self.compiled.ads)
            .into_iter()
            .filter_map(|f| {
                let [name, title, url, content]: [String; 4] = f.try_into().ok()?;
                if name.is_empty() && url.is_empty() {
                    return None;
                }
                let resolved_host = self.resolve_ad_destination(&url);
                Some(AdRecord {
                    name,
                    title,
                    url,
                    content,
                    resolved_host,
                })
            })
            .collect();
        let results: Vec<OrganicResult> = rows(&doc, &self.compiled.results)
            .into_iter()
            .zip(1..)
            .filter_map(|(f, position)| {
                let [title, url, content]: [String; 3] = f.try_into().ok()?;
                Some(OrganicResult {
                    title,
                    content,
                    url,
                    position,
                })
            })
            .collect();
        let top_stories: Vec<TopStory> = rows(&doc, &self.compiled.stories)
            .into_iter()
            .zip(1..)
            .filter_map(|(f, position)| {
                let [title, author, url]: [String; 3] = f.try_into().ok()?;
                Some(TopStory {
                    title,
                    author,
                    url,
                    position,
                })
            })
            .collect();

        let snapshot = SerpSnapshot {
            query: query.to_string(),
            tld: tld.to_string(),
            fetched_at: now,
            ads,
            results,
            top_stories,
            blocked: false,
            raw_page,
            error: None,
        };
        let page_len = page.chars().count();
        if snapshot.ads.is_empty()
            && snapshot.results.is_empty()
            && snapshot.top_stories.is_empty()
            && page_len > self.rules.mismatch_threshold
        {
            return Err(ExtractError::RuleSetMismatch {
                page_len,
                rules_version: self.rules.version,
                snapshot: Box::new(snapshot),
            });
        }
        Ok(snapshot)
    }
}

/// Field values for every container of a section, in document order.
fn rows(doc: &Html, section: &CompiledSection) -> Vec<Vec<String>> {
    doc.select(&section.container)
        .map(|container| {
            section
                .fields
                .iter()
                .map(|field| {
                    container
                        .select(&field.selector)
                        .next()
                        .map(|el| read(el, field.attribute.as_deref()))
                        .unwrap_or_default()
                })
                .collect()
        })
        .collect()
}

fn read(el: ElementRef<'_>, attribute: Option<&str>) -> String {
    match attribute {
        Some(name) => el.value().attr(name).unwrap_or_default().trim().to_string(),
        None => el.text().collect::<String>().trim().to_string(),
    }
}

/// One-shot extraction with a rule set compiled on the fly.
pub fn extract_snapshot(
    page: &str,
    rules: &ExtractionRuleSet,
    query: &str,
    tld: &str,
    now: DateTime<Utc>,
    retain_raw: bool,
) -> Result<SerpSnapshot, ExtractError> {
    let extractor = Extractor::new(rules.clone()).expect("rule set validated by caller");
    extractor.extract_snapshot(page, query, tld, now, retain_raw)
}

/// Block detection with the bundled signatures.
pub fn detect_block_page(page: &str) -> bool {
    Extractor::new(ExtractionRuleSet::bundled())
        .expect("bundled rules are valid")
        .detect_block_page(page)
}
