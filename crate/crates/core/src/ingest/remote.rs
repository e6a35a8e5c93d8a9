//! Client for a paginated remote comment archive.
//!
//! The endpoint is `GET {base}/comments` and answers with newline-delimited
//! records in the local archive schema, sorted by ascending comment ID.
//! Recognised query parameters: `subreddit`, `author`, `after`, `before`
//! (epoch seconds, half-open), `ids` (comma-separated base-36 IDs), `limit`
//! and `cursor` (return only records whose ID is greater than this base-36
//! ID). A page shorter than `limit` ends the listing.

use std::time::Duration;

use super::{encode_base36, parse_archive, ParsedArchive};
use crate::{Error, Result};

/// Base endpoint of the remote archive; when unset only local files are used.
pub const ARCHIVE_URL_ENV: &str = "DIVLENS_ARCHIVE_URL";

pub const MAX_ATTEMPTS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// One blocking GET. Connection-level failures are reported as `Err` and
/// are retried like 5xx answers.
pub trait Transport {
    fn get(&self, url: &str, query: &[(String, String)]) -> std::result::Result<HttpResponse, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        UreqTransport::new(Duration::from_secs(60))
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, query: &[(String, String)]) -> std::result::Result<HttpResponse, String> {
        let pairs = query.iter().map(|(k, v)| (k.as_str(), v.as_str()));
        let mut resp = self.agent.get(url).query_pairs(pairs).call().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArchiveQuery {
    pub community: Option<String>,
    pub author: Option<String>,
    pub after: Option<i64>,
    pub before: Option<i64>,
}

impl ArchiveQuery {
    fn params(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if let Some(c) = &self.community {
            out.push(("subreddit".to_string(), c.clone()));
        }
        if let Some(a) = &self.author {
            out.push(("author".to_string(), a.clone()));
        }
        if let Some(t) = self.after {
            out.push(("after".to_string(), t.to_string()));
        }
        if let Some(t) = self.before {
            out.push(("before".to_string(), t.to_string()));
        }
        out
    }
}

pub struct ArchiveClient<T> {
    base_url: String,
    transport: T,
    page_size: usize,
    initial_backoff: Duration,
    sleep: fn(Duration),
}

impl ArchiveClient<UreqTransport> {
    /// Build a client from [`ARCHIVE_URL_ENV`], or `None` when it is unset.
    pub fn from_env() -> Option<Self> {
        let base = std::env::var(ARCHIVE_URL_ENV).ok().filter(|s| !s.trim().is_empty())?;
        Some(ArchiveClient::new(base, UreqTransport::default()))
    }
}

impl<T: Transport> ArchiveClient<T> {
    pub fn new(base_url: impl Into<String>, transport: T) -> Self {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        ArchiveClient {
            base_url,
            transport,
            page_size: 500,
            initial_backoff: Duration::from_millis(500),
            sleep: std::thread::sleep,
        }
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        self.page_size = page_size.max(1);
        self
    }

    pub fn with_backoff(mut self, initial: Duration, sleep: fn(Duration)) -> Self {
        self.initial_backoff = initial;
        self.sleep = sleep;
        self
    }

    fn endpoint(&self) -> String {
        format!("{}/comments", self.base_url)
    }

    fn get_with_retry(&self, query: &[(String, String)]) -> Result<String> {
        let url = self.endpoint();
        let mut delay = self.initial_backoff;
        let mut last_failure = String::new();
        for attempt in 1..=MAX_ATTEMPTS {
            match self.transport.get(&url, query) {
                Ok(resp) if (200..300).contains(&resp.status) => return Ok(resp.body),
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    last_failure = format!("HTTP {}", resp.status);
                }
                Ok(resp) => {
                    return Err(Error::Remote(format!("{url}: HTTP {}", resp.status)));
                }
                Err(e) => last_failure = e,
            }
            if attempt < MAX_ATTEMPTS {
                log::warn!("archive request failed ({last_failure}), retry {attempt} in {delay:?}");
                (self.sleep)(delay);
                delay *= 2;
            }
        }
        Err(Error::Remote(format!("{url}: giving up after {MAX_ATTEMPTS} attempts: {last_failure}")))
    }

    /// Follow the cursor through every page of a listing.
    pub fn fetch(&self, query: &ArchiveQuery) -> Result<ParsedArchive> {
        let mut out = ParsedArchive::default();
        let mut cursor: Option<String> = None;
        loop {
            let mut params = query.params();
            params.push(("limit".to_string(), self.page_size.to_string()));
            if let Some(c) = &cursor {
                params.push(("cursor".to_string(), c.clone()));
            }
            let body = self.get_with_retry(&params)?;
            let page = parse_archive(body.as_bytes())?;
            let records = page.comments.len() + page.malformed + page.submissions;
            let next = page.comments.last().map(|c| c.id.clone());
            out.absorb(page);
            match next {
                Some(id) if records >= self.page_size => cursor = Some(id),
                _ => break,
            }
        }
        Ok(out)
    }

    /// Retrieve specific comments, typically a uniform ID sample. IDs with no
    /// surviving comment are simply absent from the result.
    pub fn fetch_ids(&self, ids: &[u64]) -> Result<ParsedArchive> {
        let mut out = ParsedArchive::default();
        for chunk in ids.chunks(self.page_size) {
            let joined = chunk.iter().map(|&i| encode_base36(i)).collect::<Vec<_>>().join(",");
            let params = vec![
                ("ids".to_string(), joined),
                ("limit".to_string(), self.page_size.to_string()),
            ];
            let body = self.get_with_retry(&params)?;
            out.absorb(parse_archive(body.as_bytes())?);
        }
        Ok(out)
    }
}
