//! Page fetching with denylist, robots exclusion, per-host politeness, size
//! cap and bounded retries.

use std::cell::RefCell;
use std::collections::HashMap;
use std::io::Read;
use std::thread;
use std::time::{Duration, Instant};

use reqwest::Url;
use serde::{Deserialize, Serialize};
use serde_json::json;
use texting_robots::Robot;
use thiserror::Error;

use crate::cassette::{Cassette, CassetteStore, Channel};
use crate::config::FetchConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub url: String,
    pub status: u16,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("invalid url {url}: {reason}")]
    InvalidUrl { url: String, reason: String },
    #[error("fetch of {url} denied: {reason}")]
    FetchDenied { url: String, reason: String },
    #[error("fetch of {url} failed after {attempts} attempt(s): {message}")]
    FetchFailed {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("{url} is {size} bytes, over the {cap} byte cap")]
    TooLarge { url: String, size: usize, cap: usize },
    #[error("no fetch cassette for {url}")]
    CassetteMiss { url: String },
}

pub trait Fetcher {
    fn fetch(&self, url: &str) -> Result<RawDocument, FetchError>;
}

impl<F: Fetcher + ?Sized> Fetcher for &F {
    fn fetch(&self, url: &str) -> Result<RawDocument, FetchError> {
        (**self).fetch(url)
    }
}

/// Cassette file key for a URL.
pub fn fetch_key(url: &str) -> String {
    CassetteStore::hashed(url)
}

fn host_denied(host: &str, denylist: &[String]) -> bool {
    let host = host.to_ascii_lowercase();
    denylist.iter().any(|d| {
        let d = d.to_ascii_lowercase();
        match d.strip_prefix('.') {
            Some(suffix) => host == suffix || host.ends_with(&format!(".{suffix}")),
            None => host == d,
        }
    })
}

/// Syntax, scheme and denylist checks shared by every fetcher.
pub fn check_url(url: &str, config: &FetchConfig) -> Result<Url, FetchError> {
    let parsed = Url::parse(url).map_err(|e| FetchError::InvalidUrl {
        url: url.into(),
        reason: e.to_string(),
    })?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return Err(FetchError::InvalidUrl {
            url: url.into(),
            reason: format!("unsupported scheme {}", parsed.scheme()),
        });
    }
    let Some(host) = parsed.host_str() else {
        return Err(FetchError::InvalidUrl {
            url: url.into(),
            reason: "no host".into(),
        });
    };
    if host_denied(host, &config.denylist) {
        return Err(FetchError::FetchDenied {
            url: url.into(),
            reason: format!("host {host} is on the denylist"),
        });
    }
    Ok(parsed)
}

fn check_size(url: &str, size: usize, cap: usize) -> Result<(), FetchError> {
    if size > cap {
        return Err(FetchError::TooLarge {
            url: url.into(),
            size,
            cap,
        });
    }
    Ok(())
}

/// Per-host start times. `wait` returns how long to sleep before the next request.
#[derive(Debug, Default)]
pub struct Politeness {
    delay: Duration,
    last: HashMap<String, Instant>,
}

impl Politeness {
    pub fn new(delay: Duration) -> Self {
        Politeness {
            delay,
            last: HashMap::new(),
        }
    }

    pub fn wait(&self, host: &str, now: Instant) -> Duration {
        match self.last.get(host) {
            Some(&t) => self.delay.saturating_sub(now.saturating_duration_since(t)),
            None => Duration::ZERO,
        }
    }

    pub fn started(&mut self, host: &str, at: Instant) {
        self.last.insert(host.to_string(), at);
    }
}

enum RobotsRule {
    AllowAll,
    DenyAll,
    Parsed(Box<Robot>),
}

pub struct HttpFetcher {
    client: reqwest::blocking::Client,
    config: FetchConfig,
    politeness: RefCell<Politeness>,
    robots: RefCell<HashMap<String, RobotsRule>>,
    log: RefCell<Vec<(String, Instant)>>,
}

impl HttpFetcher {
    pub fn new(config: FetchConfig) -> Self {
        HttpFetcher {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_millis(config.timeout_ms))
                .user_agent(config.user_agent.clone())
                .build()
                .expect("http client builds"),
            politeness: RefCell::new(Politeness::new(Duration::from_millis(
                config.per_host_delay_ms,
            ))),
            robots: RefCell::new(HashMap::new()),
            log: RefCell::new(Vec::new()),
            config,
        }
    }

    /// Host and start instant of every request sent, robots.txt included.
    pub fn fetch_log(&self) -> Vec<(String, Instant)> {
        self.log.borrow().clone()
    }

    fn polite_get(&self, host: &str, url: &str) -> reqwest::Result<reqwest::blocking::Response> {
        let wait = self.politeness.borrow().wait(host, Instant::now());
        if !wait.is_zero() {
            thread::sleep(wait);
        }
        let start = Instant::now();
        self.politeness.borrow_mut().started(host, start);
        self.log.borrow_mut().push((host.to_string(), start));
        self.client.get(url).send()
    }

    fn robots_allow(&self, url: &Url, host_key: &str) -> bool {
        if !self.robots.borrow().contains_key(host_key) {
            let robots_url = format!("{}://{}/robots.txt", url.scheme(), host_key);
            let rule = match self.polite_get(host_key, &robots_url) {
                Ok(r) if r.status().is_success() => match r.bytes() {
                    Ok(b) => Robot::new(&self.config.user_agent, &b)
                        .map(|r| RobotsRule::Parsed(Box::new(r)))
                        .unwrap_or(RobotsRule::AllowAll),
                    Err(_) => RobotsRule::DenyAll,
                },
                Ok(r) if r.status().is_client_error() => RobotsRule::AllowAll,
                _ => RobotsRule::DenyAll,
            };
            self.robots.borrow_mut().insert(host_key.to_string(), rule);
        }
        match &self.robots.borrow()[host_key] {
            RobotsRule::AllowAll => true,
            RobotsRule::DenyAll => false,
            RobotsRule::Parsed(r) => r.allowed(url.as_str()),
        }
    }

    fn attempt(&self, url: &str, host: &str) -> Result<RawDocument, (bool, FetchError)> {
        let failed = |message: String| FetchError::FetchFailed {
            url: url.into(),
            attempts: 1,
            message,
        };
        let resp = self
            .polite_get(host, url)
            .map_err(|e| (true, failed(e.to_string())))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let transient = status == 429 || status >= 500;
            return Err((transient, failed(format!("HTTP {status}"))));
        }
        let cap = self.config.max_bytes;
        if let Some(len) = resp.content_length() {
            check_size(url, len as usize, cap).map_err(|e| (false, e))?;
        }
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let mut body = Vec::new();
        resp.take(cap as u64 + 1)
            .read_to_end(&mut body)
            .map_err(|e| (true, failed(e.to_string())))?;
        check_size(url, body.len(), cap).map_err(|e| (false, e))?;
        Ok(RawDocument {
            url: url.into(),
            status,
            content_type,
            body,
        })
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<RawDocument, FetchError> {
        let parsed = check_url(url, &self.config)?;
        let host = match parsed.port() {
            Some(p) => format!("{}:{p}", parsed.host_str().unwrap_or_default()),
            None => parsed.host_str().unwrap_or_default().to_string(),
        };
        if self.config.respect_robots && !self.robots_allow(&parsed, &host) {
            return Err(FetchError::FetchDenied {
                url: url.into(),
                reason: "robots exclusion".into(),
            });
        }
        let mut tries = 0;
        loop {
            tries += 1;
            match self.attempt(url, &host) {
                Ok(doc) => return Ok(doc),
                Err((true, _)) if tries <= self.config.retries => {
                    thread::sleep(Duration::from_millis(
                        self.config.backoff_ms * 2u64.pow(tries - 1),
                    ));
                }
                Err((_, FetchError::FetchFailed { message, .. })) => {
                    return Err(FetchError::FetchFailed {
                        url: url.into(),
                        attempts: tries,
                        message,
                    })
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}

/// Serves recorded pages; never touches the network.
#[derive(Debug, Clone)]
pub struct ReplayFetcher {
    store: CassetteStore,
    config: FetchConfig,
}

impl ReplayFetcher {
    pub fn new(store: CassetteStore, config: FetchConfig) -> Self {
        ReplayFetcher { store, config }
    }
}

impl Fetcher for ReplayFetcher {
    fn fetch(&self, url: &str) -> Result<RawDocument, FetchError> {
        check_url(url, &self.config)?;
        let c = self
            .store
            .load(Channel::Fetch, &fetch_key(url))
            .map_err(|e| FetchError::FetchFailed {
                url: url.into(),
                attempts: 1,
                message: e.to_string(),
            })?
            .ok_or_else(|| FetchError::CassetteMiss { url: url.into() })?;
        if c.status != 200 {
            return Err(FetchError::FetchFailed {
                url: url.into(),
                attempts: 1,
                message: format!("recorded HTTP {}", c.status),
            });
        }
        check_size(url, c.body.len(), self.config.max_bytes)?;
        Ok(RawDocument {
            url: url.into(),
            status: c.status,
            content_type: c.headers.get("content-type").cloned(),
            body: c.body.into_bytes(),
        })
    }
}

pub struct RecordingFetcher<F> {
    inner: F,
    store: CassetteStore,
}

impl<F: Fetcher> RecordingFetcher<F> {
    pub fn new(inner: F, store: CassetteStore) -> Self {
        RecordingFetcher { inner, store }
    }
}

/// The cassette written for a fetched page.
pub fn fetch_cassette(doc: &RawDocument) -> Cassette {
    let mut headers = std::collections::BTreeMap::new();
    if let Some(ct) = &doc.content_type {
        headers.insert("content-type".to_string(), ct.clone());
    }
    Cassette {
        request: json!({ "url": doc.url }),
        status: doc.status,
        headers,
        body: String::from_utf8_lossy(&doc.body).into_owned(),
    }
}

impl<F: Fetcher> Fetcher for RecordingFetcher<F> {
    fn fetch(&self, url: &str) -> Result<RawDocument, FetchError> {
        let doc = self.inner.fetch(url)?;
        self.store
            .save(Channel::Fetch, &fetch_key(url), &fetch_cassette(&doc))
            .map_err(|e| FetchError::FetchFailed {
                url: url.into(),
                attempts: 1,
                message: e.to_string(),
            })?;
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{serve, Canned};

    fn cfg() -> FetchConfig {
        FetchConfig {
            per_host_delay_ms: 0,
            backoff_ms: 1,
            ..Default::default()
        }
    }

    #[test]
    fn denylist_and_scheme() {
        let mut c = cfg();
        c.denylist = vec!["blocked.example".into(), ".tracker.example".into()];
        assert!(matches!(
            check_url("https://blocked.example/a", &c),
            Err(FetchError::FetchDenied { .. })
        ));
        assert!(matches!(
            check_url("https://cdn.tracker.example/a", &c),
            Err(FetchError::FetchDenied { .. })
        ));
        assert!(check_url("https://notblocked.example/a", &c).is_ok());
        assert!(matches!(
            check_url("ftp://x.example/a", &c),
            Err(FetchError::InvalidUrl { .. })
        ));
        assert!(matches!(check_url("not a url", &c), Err(FetchError::InvalidUrl { .. })));
    }

    #[test]
    fn politeness_waits_out_the_delay() {
        let mut p = Politeness::new(Duration::from_secs(2));
        let t0 = Instant::now();
        assert_eq!(p.wait("a", t0), Duration::ZERO);
        p.started("a", t0);
        assert_eq!(p.wait("a", t0 + Duration::from_millis(500)), Duration::from_millis(1500));
        assert_eq!(p.wait("a", t0 + Duration::from_secs(3)), Duration::ZERO);
        assert_eq!(p.wait("b", t0), Duration::ZERO);
    }

    #[test]
    fn live_fetch_honors_robots_delay_and_cap() {
        let (base, _) = serve(|path| match path {
            "/robots.txt" => Canned::new(200, "text/plain", "User-agent: *\nDisallow: /private\n"),
            "/big" => Canned::new(200, "text/html", vec![b'x'; 300]),
            "/flaky" => Canned::new(503, "text/plain", "down"),
            _ => Canned::new(200, "text/html", "<p>A supplies B</p>"),
        });
        let mut c = cfg();
        c.per_host_delay_ms = 40;
        c.max_bytes = 200;
        let f = HttpFetcher::new(c);
        let doc = f.fetch(&format!("{base}/page")).unwrap();
        assert_eq!(doc.body, b"<p>A supplies B</p>");
        assert_eq!(doc.content_type.as_deref(), Some("text/html"));
        assert!(matches!(
            f.fetch(&format!("{base}/private/x")),
            Err(FetchError::FetchDenied { .. })
        ));
        assert!(matches!(
            f.fetch(&format!("{base}/big")),
            Err(FetchError::TooLarge { size: 300, cap: 200, .. })
        ));
        match f.fetch(&format!("{base}/flaky")) {
            Err(FetchError::FetchFailed { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
        let log = f.fetch_log();
        assert!(log.len() >= 6);
        for w in log.windows(2) {
            assert!(w[1].1.duration_since(w[0].1) >= Duration::from_millis(40));
        }
    }

    #[test]
    fn replay_reads_cassettes_and_applies_cap() {
        let dir = tempfile::tempdir().unwrap();
        let store = CassetteStore::new(dir.path());
        let doc = RawDocument {
            url: "https://news.example/a".into(),
            status: 200,
            content_type: Some("text/html".into()),
            body: b"<p>hello</p>".to_vec(),
        };
        store
            .save(Channel::Fetch, &fetch_key(&doc.url), &fetch_cassette(&doc))
            .unwrap();
        let r = ReplayFetcher::new(store.clone(), cfg());
        assert_eq!(r.fetch(&doc.url).unwrap(), doc);
        assert!(matches!(
            r.fetch("https://news.example/b"),
            Err(FetchError::CassetteMiss { .. })
        ));
        let mut small = cfg();
        small.max_bytes = 4;
        assert!(matches!(
            ReplayFetcher::new(store, small).fetch(&doc.url),
            Err(FetchError::TooLarge { .. })
        ));
    }
}
