//! Landing-host resolution for ad links, including ad-network click relays.

use url::Url;

use crate::model::{canonicalize_host, UNKNOWN_HOST};

const MAX_RELAY_DEPTH: usize = 4;

/// Relay hosts and the query parameters that may carry the real destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayConfig {
    pub relay_hosts: Vec<String>,
    pub param_allowlist: Vec<String>,
}

impl RelayConfig {
    fn is_relay(&self, host: &str) -> bool {
        self.relay_hosts.iter().any(|relay| {
            host == relay
                || host
                    .strip_suffix(relay.as_str())
                    .is_some_and(|prefix| prefix.ends_with('.'))
        })
    }
}

fn parse_link(href: &str) -> Option<Url> {
    let href = href.trim();
    if href.is_empty() {
        return None;
    }
    let url = if href.starts_with('/') && !href.starts_with("//") {
        // Relative links on a result page point back at the search engine.
        Url::parse("https://www.google.com").ok()?.join(href).ok()?
    } else if href.starts_with("//") {
        Url::parse(&format!("https:{href}")).ok()?
    } else if href.contains("://") {
        Url::parse(href).ok()?
    } else {
        Url::parse(&format!("http://{href}")).ok()?
    };
    matches!(url.scheme(), "http" | "https").then_some(url)
}

fn resolve(href: &str, relays: &RelayConfig, depth: usize) -> String {
    let Some(url) = parse_link(href) else {
        return UNKNOWN_HOST.to_string();
    };
    let host = canonicalize_host(url.as_str());
    if host == UNKNOWN_HOST || !relays.is_relay(&host) {
        return host;
    }
    if depth >= MAX_RELAY_DEPTH {
        return UNKNOWN_HOST.to_string();
    }
    for param in &relays.param_allowlist {
        for (key, value) in url.query_pairs() {
            if key != param.as_str() {
                continue;
            }
            let value = value.trim();
            if !(value.starts_with("http://") || value.starts_with("https://")) {
                continue;
            }
            let inner = resolve(value, relays, depth + 1);
            if inner != UNKNOWN_HOST {
                return inner;
            }
        }
    }
    UNKNOWN_HOST.to_string()
}

/// Canonical landing host of an ad link.
///
/// Direct links resolve to their own host. Links through a relay host resolve
/// to the host carried in the first allowlisted parameter holding an absolute
/// URL (following nested relays), or to `"unknown"` when the destination is
/// obfuscated.
pub fn resolve_ad_destination(href: &str, relays: &RelayConfig) -> String {
    resolve(href, relays, 0)
}
