use url::Url;

/// Placeholder used wherever a host cannot be determined.
pub const UNKNOWN_HOST: &str = "unknown";

/// Reduces a URL or bare host to its canonical lowercase host.
///
/// Scheme, credentials, port, path and a leading `www.` are dropped;
/// internationalised names come back in punycode. Anything that does not
/// parse as a host yields [`UNKNOWN_HOST`].
pub fn canonicalize_host(url_or_host: &str) -> String {
    let trimmed = url_or_host.trim();
    if trimmed.is_empty() {
        return UNKNOWN_HOST.to_string();
    }
    let parsed = if trimmed.contains("://") {
        Url::parse(trimmed)
    } else if let Some(rest) = trimmed.strip_prefix("//") {
        Url::parse(&format!("http://{rest}"))
    } else {
        Url::parse(&format!("http://{trimmed}"))
    };
    let Ok(url) = parsed else {
        return UNKNOWN_HOST.to_string();
    };
    let Some(host) = url.host_str() else {
        return UNKNOWN_HOST.to_string();
    };
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host);
    if host.is_empty() || host.contains(char::is_whitespace) {
        UNKNOWN_HOST.to_string()
    } else {
        host.to_string()
    }
}
