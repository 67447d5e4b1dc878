//! Blocking HTTP clients for the collection server and search engines.

use std::time::Duration;

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serpaudit_core::agent::{ApiError, FetchError, Fetcher, ServerApi};
use serpaudit_core::server::{ConfigBundle, RegisterRequest, RegisterResponse, SubmitAck};
use serpaudit_core::Submission;

const USER_AGENT: &str = concat!("serpaudit/", env!("CARGO_PKG_VERSION"));

fn client(timeout: Duration) -> Client {
    Client::builder()
        .user_agent(USER_AGENT)
        .timeout(timeout)
        .build()
        .expect("HTTP client")
}

/// The collection server over HTTP. Transport failures and 5xx replies are
/// treated as the server being unreachable; other non-success replies as
/// rejections.
#[derive(Clone)]
pub struct HttpServerApi {
    base: String,
    http: Client,
}

impl HttpServerApi {
    pub fn new(base: &str) -> Self {
        HttpServerApi {
            base: base.trim_end_matches('/').to_string(),
            http: client(Duration::from_secs(30)),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }
}

fn classify(result: reqwest::Result<Response>) -> Result<Response, ApiError> {
    let resp = result.map_err(|e| ApiError::Unreachable(e.to_string()))?;
    let status = resp.status();
    if status.is_success() || status == StatusCode::NOT_MODIFIED {
        return Ok(resp);
    }
    let body = resp.text().unwrap_or_default();
    if status.is_server_error() {
        Err(ApiError::Unreachable(format!("{status}: {body}")))
    } else {
        Err(ApiError::Rejected(format!("{status}: {body}")))
    }
}

fn decode<T: serde::de::DeserializeOwned>(resp: Response) -> Result<T, ApiError> {
    resp.json().map_err(|e| ApiError::Unreachable(format!("undecodable reply: {e}")))
}

impl ServerApi for HttpServerApi {
    fn register(&mut self, req: &RegisterRequest) -> Result<RegisterResponse, ApiError> {
        decode(classify(self.http.post(self.url("/register")).json(req).send())?)
    }

    fn submit(&mut self, sub: &Submission) -> Result<SubmitAck, ApiError> {
        decode(classify(self.http.post(self.url("/submit")).json(sub).send())?)
    }

    fn config(&mut self, client_version: u64) -> Result<Option<ConfigBundle>, ApiError> {
        let resp = classify(
            self.http
                .get(self.url("/config"))
                .query(&[("v", client_version)])
                .send(),
        )?;
        if resp.status() == StatusCode::NOT_MODIFIED {
            return Ok(None);
        }
        decode(resp).map(Some)
    }
}

/// Fetches result pages over HTTP, from the mock engine or a live one.
#[derive(Clone)]
pub struct HttpFetcher {
    http: Client,
}

impl HttpFetcher {
    pub fn new() -> Self {
        HttpFetcher {
            http: client(Duration::from_secs(20)),
        }
    }
}

impl Default for HttpFetcher {
    fn default() -> Self {
        Self::new()
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&mut self, url: &str) -> Result<String, FetchError> {
        let resp = self
            .http
            .get(url)
            .header(reqwest::header::ACCEPT_LANGUAGE, "en")
            .send()
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(FetchError::Status(status.as_u16()));
        }
        resp.text().map_err(|e| FetchError::Transport(e.to_string()))
    }
}

/// Downloads a corpus export as text.
pub fn fetch_export(
    base: &str,
    token: &str,
    from: Option<&str>,
    to: Option<&str>,
    groups: Option<&str>,
) -> anyhow::Result<String> {
    let mut query: Vec<(&str, &str)> = Vec::new();
    if let Some(f) = from {
        query.push(("from", f));
    }
    if let Some(t) = to {
        query.push(("to", t));
    }
    if let Some(g) = groups {
        query.push(("groups", g));
    }
    let resp = client(Duration::from_secs(300))
        .get(format!("{}/export", base.trim_end_matches('/')))
        .bearer_auth(token)
        .query(&query)
        .send()?;
    let status = resp.status();
    let body = resp.text()?;
    anyhow::ensure!(status.is_success(), "export failed with {status}: {body}");
    Ok(body)
}
