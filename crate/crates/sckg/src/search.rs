//! Search providers: "query in, ranked results out".

use std::time::Duration;

use sckg_core::harvest::{normalize_query, normalize_results, SearchResult};
use sckg_core::provider::{ProviderError, ProviderErrorKind};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cassette::{Cassette, CassetteStore, Channel};
use crate::llm::{classify_status, network_error, retry_after_ms};

pub trait SearchProvider {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, ProviderError>;
}

impl<S: SearchProvider + ?Sized> SearchProvider for &S {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, ProviderError> {
        (**self).search(query, limit)
    }
}

/// Body of a search cassette and of the HTTP provider's response.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchPage {
    pub results: Vec<SearchResult>,
}

/// Cassette file key for a query.
pub fn search_key(query: &str) -> String {
    CassetteStore::hashed(&normalize_query(query))
}

/// `GET {base}?q=<query>&count=<limit>` returning `{"results": [...]}`.
#[derive(Debug, Clone)]
pub struct HttpSearch {
    client: reqwest::blocking::Client,
    base: String,
    key: Option<String>,
}

impl HttpSearch {
    pub fn new(base: &str, key: Option<String>) -> Self {
        HttpSearch {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .expect("http client builds"),
            base: base.to_string(),
            key,
        }
    }

    /// `SEARCH_API_BASE` and `SEARCH_API_KEY`.
    pub fn from_env() -> Result<Self, ProviderError> {
        let base = std::env::var("SEARCH_API_BASE").map_err(|_| {
            ProviderError::new(ProviderErrorKind::Auth, "SEARCH_API_BASE is not set")
        })?;
        Ok(Self::new(&base, std::env::var("SEARCH_API_KEY").ok()))
    }
}

impl SearchProvider for HttpSearch {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, ProviderError> {
        let mut req = self
            .client
            .get(&self.base)
            .query(&[("q", query), ("count", &limit.to_string())]);
        if let Some(k) = &self.key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(network_error)?;
        let status = resp.status().as_u16();
        if status != 200 {
            let mut err = ProviderError::new(classify_status(status), format!("HTTP {status}"));
            err.retry_after_ms = retry_after_ms(resp.headers());
            return Err(err);
        }
        let page: SearchPage = resp
            .json()
            .map_err(|e| ProviderError::new(ProviderErrorKind::BadResponse, e.to_string()))?;
        Ok(normalize_results(page.results, limit))
    }
}

#[derive(Debug, Clone)]
pub struct ReplaySearch {
    store: CassetteStore,
}

impl ReplaySearch {
    pub fn new(store: CassetteStore) -> Self {
        ReplaySearch { store }
    }
}

impl SearchProvider for ReplaySearch {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, ProviderError> {
        let bad = |m: String| ProviderError::new(ProviderErrorKind::BadResponse, m);
        let c = self
            .store
            .load(Channel::Search, &search_key(query))
            .map_err(|e| bad(e.to_string()))?
            .ok_or_else(|| {
                ProviderError::new(
                    ProviderErrorKind::CassetteMiss,
                    format!("no search cassette for {:?}", normalize_query(query)),
                )
            })?;
        if c.status != 200 {
            return Err(ProviderError::new(
                classify_status(c.status),
                format!("recorded HTTP {}", c.status),
            ));
        }
        let page: SearchPage = serde_json::from_str(&c.body).map_err(|e| bad(e.to_string()))?;
        Ok(normalize_results(page.results, limit))
    }
}

#[derive(Debug)]
pub struct RecordingSearch<S> {
    inner: S,
    store: CassetteStore,
}

impl<S: SearchProvider> RecordingSearch<S> {
    pub fn new(inner: S, store: CassetteStore) -> Self {
        RecordingSearch { inner, store }
    }
}

impl<S: SearchProvider> SearchProvider for RecordingSearch<S> {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, ProviderError> {
        let results = self.inner.search(query, limit)?;
        let page = SearchPage {
            results: results.clone(),
        };
        let cassette = Cassette {
            request: json!({ "query": normalize_query(query) }),
            status: 200,
            headers: [("content-type".to_string(), "application/json".to_string())].into(),
            body: serde_json::to_string(&page).expect("page serializes"),
        };
        self.store
            .save(Channel::Search, &search_key(query), &cassette)
            .map_err(|e| ProviderError::new(ProviderErrorKind::BadResponse, e.to_string()))?;
        Ok(results)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{serve, Canned};

    fn result(rank: u32) -> SearchResult {
        SearchResult {
            url: format!("https://news.example/{rank}"),
            title: format!("t{rank}"),
            snippet: String::new(),
            rank,
        }
    }

    struct Three;
    impl SearchProvider for Three {
        fn search(&self, _: &str, limit: usize) -> Result<Vec<SearchResult>, ProviderError> {
            Ok((1..=3).map(result).take(limit).collect())
        }
    }

    #[test]
    fn replay_truncates_and_misses() {
        let dir = tempfile::tempdir().unwrap();
        let store = CassetteStore::new(dir.path());
        RecordingSearch::new(Three, store.clone())
            .search("TSMC  Suppliers", 10)
            .unwrap();
        let replay = ReplaySearch::new(store);
        assert_eq!(replay.search("tsmc suppliers", 10).unwrap().len(), 3);
        let one = replay.search("TSMC suppliers", 1).unwrap();
        assert_eq!(one, vec![result(1)]);
        let miss = replay.search("unknown query", 10).unwrap_err();
        assert_eq!(miss.kind, ProviderErrorKind::CassetteMiss);
    }

    #[test]
    fn http_search_sends_query_and_key() {
        let body = serde_json::to_string(&SearchPage {
            results: vec![result(2), result(1)],
        })
        .unwrap();
        let (base, seen) = serve(move |_| Canned::new(200, "application/json", body.clone()));
        let s = HttpSearch::new(&format!("{base}/search"), Some("k".into()));
        let got = s.search("acme suppliers", 5).unwrap();
        assert_eq!(got.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2]);
        assert!(seen.lock().unwrap()[0].path.starts_with("/search?q=acme+suppliers&count=5"));
    }
}
