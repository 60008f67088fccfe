//! On-disk cassettes: one JSON file per recorded provider exchange.
//!
//! Layout under the cassette root:
//!
//! ```text
//! llm/<sha256 of prompt>.json
//! search/<sha256 of normalized query>.json
//! fetch/<sha256 of url>.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sckg_core::model::sha256_hex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Llm,
    Search,
    Fetch,
}

impl Channel {
    fn dir(self) -> &'static str {
        match self {
            Channel::Llm => "llm",
            Channel::Search => "search",
            Channel::Fetch => "fetch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cassette {
    /// What was asked: the prompt, the normalized query, or the URL.
    pub request: serde_json::Value,
    pub status: u16,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    pub body: String,
}

#[derive(Debug, Error)]
pub enum CassetteError {
    #[error("cassette io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt cassette {path}: {source}")]
    Corrupt {
        path: PathBuf,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone)]
pub struct CassetteStore {
    root: PathBuf,
}

impl CassetteStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CassetteStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// File name for a key that is not already a hash.
    pub fn hashed(key: &str) -> String {
        sha256_hex(key.as_bytes())
    }

    pub fn path(&self, channel: Channel, file_key: &str) -> PathBuf {
        self.root.join(channel.dir()).join(format!("{file_key}.json"))
    }

    pub fn load(&self, channel: Channel, file_key: &str) -> Result<Option<Cassette>, CassetteError> {
        let path = self.path(channel, file_key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(CassetteError::Io { path, source }),
        };
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|source| CassetteError::Corrupt { path, source })
    }

    pub fn save(&self, channel: Channel, file_key: &str, cassette: &Cassette) -> Result<(), CassetteError> {
        let path = self.path(channel, file_key);
        let io = |source| CassetteError::Io {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(path.parent().expect("cassette path has a parent")).map_err(io)?;
        let mut text = serde_json::to_string_pretty(cassette).expect("cassette serializes");
        text.push('\n');
        let mut f = fs::File::create(&path).map_err(io)?;
        f.write_all(text.as_bytes()).map_err(io)
    }

    pub fn count(&self, channel: Channel) -> usize {
        fs::read_dir(self.root.join(channel.dir()))
            .map(|d| d.filter_map(Result::ok).count())
            .unwrap_or(0)
    }
}
