//! Provider wiring by mode, and the on-disk layout of a data directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use sckg_core::graph::AliasPolicy;
use sckg_core::provider::{LlmProvider, ProviderError};

use crate::cassette::CassetteStore;
use crate::config::{ProviderMode, RunConfig};
use crate::db::{Database, DbError, OpenReport};
use crate::docstore::{DocumentStore, StorageError};
use crate::fetch::{Fetcher, HttpFetcher, RecordingFetcher, ReplayFetcher};
use crate::llm::{HttpLlm, RecordingLlm, ReplayLlm};
use crate::orchestrator::Services;
use crate::search::{HttpSearch, RecordingSearch, ReplaySearch, SearchProvider};

/// Owned providers for one run.
pub struct ProviderSet {
    pub search: Box<dyn SearchProvider>,
    pub fetcher: Box<dyn Fetcher>,
    pub llm: Box<dyn LlmProvider>,
}

impl ProviderSet {
    pub fn from_config(config: &RunConfig) -> Result<Self, ProviderError> {
        let p = &config.providers;
        let store = || CassetteStore::new(&p.cassette_dir);
        Ok(match p.mode {
            ProviderMode::Replay => ProviderSet {
                search: Box::new(ReplaySearch::new(store())),
                fetcher: Box::new(ReplayFetcher::new(store(), config.fetch.clone())),
                llm: Box::new(ReplayLlm::new(store())),
            },
            ProviderMode::Live | ProviderMode::Record => {
                let search = HttpSearch::from_env()?;
                let fetcher = HttpFetcher::new(config.fetch.clone());
                let llm = HttpLlm::from_env(&p.llm_model)?
                    .with_retries(config.fetch.retries, Duration::from_millis(config.fetch.backoff_ms));
                if p.mode == ProviderMode::Record {
                    ProviderSet {
                        search: Box::new(RecordingSearch::new(search, store())),
                        fetcher: Box::new(RecordingFetcher::new(fetcher, store())),
                        llm: Box::new(RecordingLlm::new(llm, store())),
                    }
                } else {
                    ProviderSet {
                        search: Box::new(search),
                        fetcher: Box::new(fetcher),
                        llm: Box::new(llm),
                    }
                }
            }
        })
    }

    pub fn services(&self) -> Services<'_> {
        Services {
            search: self.search.as_ref(),
            fetcher: self.fetcher.as_ref(),
            llm: self.llm.as_ref(),
        }
    }
}

/// `<data-dir>/db`, `docs`, `checkpoints` and `runs`.
#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn db_dir(&self) -> PathBuf {
        self.root.join("db")
    }

    pub fn docs_dir(&self) -> PathBuf {
        self.root.join("docs")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    /// Report of the most recent run.
    pub fn run_report(&self) -> PathBuf {
        self.root.join("runs").join("current.json")
    }

    pub fn open_db(&self, policy: AliasPolicy) -> Result<(Database, OpenReport), DbError> {
        Database::open(self.db_dir(), policy)
    }

    pub fn open_docs(&self) -> Result<DocumentStore, StorageError> {
        DocumentStore::open(self.docs_dir())
    }
}
