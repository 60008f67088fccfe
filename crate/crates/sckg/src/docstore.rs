//! Content-addressed document store with an append-only provenance log.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use sckg_core::harvest::KeywordQuery;
use sckg_core::model::{sha256_hex, DocumentId, Timestamp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("storage failure at {path}: {source}")]
    StorageFailure {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt record at {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("refusing to store a document with empty text")]
    EmptyText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredDocument {
    pub document_id: DocumentId,
    pub cleaned_text: String,
    /// First URL the text was seen at.
    pub url: Option<String>,
    /// SHA-256 of the raw body, stored under `raw/`.
    pub raw_sha256: Option<String>,
    pub language: Option<String>,
    pub fetched_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub document_id: DocumentId,
    pub url: Option<String>,
    pub fetched_at: Timestamp,
    pub origin_query: Option<KeywordQuery>,
}

#[derive(Debug, Clone, Copy)]
pub struct NewDocument<'a> {
    pub cleaned_text: &'a str,
    pub url: Option<&'a str>,
    pub raw: Option<&'a [u8]>,
    pub language: Option<&'a str>,
    pub fetched_at: Timestamp,
    pub origin_query: Option<&'a KeywordQuery>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreOutcome {
    pub document_id: DocumentId,
    pub is_new: bool,
}

#[derive(Debug, Clone)]
pub struct DocumentStore {
    root: PathBuf,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StorageError + '_ {
    move |source| StorageError::StorageFailure {
        path: path.to_path_buf(),
        source,
    }
}

impl DocumentStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        for sub in ["docs", "raw"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(io(&p))?;
        }
        Ok(DocumentStore { root })
    }

    fn doc_path(&self, id: &DocumentId) -> PathBuf {
        self.root.join("docs").join(format!("{}.json", id.as_str()))
    }

    fn provenance_path(&self) -> PathBuf {
        self.root.join("provenance.jsonl")
    }

    pub fn contains(&self, id: &DocumentId) -> bool {
        self.doc_path(id).exists()
    }

    /// Store by content address and append a provenance record either way.
    pub fn store(&self, doc: NewDocument<'_>) -> Result<StoreOutcome, StorageError> {
        if doc.cleaned_text.trim().is_empty() {
            return Err(StorageError::EmptyText);
        }
        let id = DocumentId::for_text(doc.cleaned_text);
        let path = self.doc_path(&id);
        let is_new = !path.exists();
        if is_new {
            let raw_sha256 = match doc.raw {
                Some(raw) => {
                    let h = sha256_hex(raw);
                    let rp = self.root.join("raw").join(format!("{h}.bin"));
                    if !rp.exists() {
                        fs::write(&rp, raw).map_err(io(&rp))?;
                    }
                    Some(h)
                }
                None => None,
            };
            let stored = StoredDocument {
                document_id: id.clone(),
                cleaned_text: doc.cleaned_text.to_string(),
                url: doc.url.map(str::to_string),
                raw_sha256,
                language: doc.language.map(str::to_string),
                fetched_at: doc.fetched_at,
            };
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, serde_json::to_vec_pretty(&stored).expect("document serializes"))
                .map_err(io(&tmp))?;
            fs::rename(&tmp, &path).map_err(io(&path))?;
        }
        self.append_provenance(&Provenance {
            document_id: id.clone(),
            url: doc.url.map(str::to_string),
            fetched_at: doc.fetched_at,
            origin_query: doc.origin_query.cloned(),
        })?;
        Ok(StoreOutcome {
            document_id: id,
            is_new,
        })
    }

    pub fn append_provenance(&self, record: &Provenance) -> Result<(), StorageError> {
        let path = self.provenance_path();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io(&path))?;
        let mut line = serde_json::to_string(record).expect("provenance serializes");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io(&path))
    }

    pub fn get(&self, id: &DocumentId) -> Result<Option<StoredDocument>, StorageError> {
        let path = self.doc_path(id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io(&path)(e)),
        };
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| StorageError::Corrupt {
                path,
                message: e.to_string(),
            })
    }

    /// Stored document ids in sorted order.
    pub fn ids(&self) -> Result<Vec<DocumentId>, StorageError> {
        let dir = self.root.join("docs");
        let mut ids: Vec<DocumentId> = fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(Result::ok)
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json").map(|s| DocumentId(s.to_string()))
            })
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn provenance(&self) -> Result<Vec<Provenance>, StorageError> {
        let path = self.provenance_path();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io(&path)(e)),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|e| StorageError::Corrupt {
                    path: path.clone(),
                    message: e.to_string(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc<'a>(text: &'a str, url: &'a str) -> NewDocument<'a> {
        NewDocument {
            cleaned_text: text,
            url: Some(url),
            raw: Some(text.as_bytes()),
            language: Some("en"),
            fetched_at: Timestamp(1),
            origin_query: None,
        }
    }

    #[test]
    fn same_text_twice_is_one_document_two_provenance_records() {
        let dir = tempfile::tempdir().unwrap();
        let s = DocumentStore::open(dir.path()).unwrap();
        let a = s.store(doc("A supplies B", "https://x.example/1")).unwrap();
        let b = s.store(doc("A supplies B", "https://y.example/2")).unwrap();
        assert!(a.is_new && !b.is_new);
        assert_eq!(a.document_id, b.document_id);
        assert_eq!(s.ids().unwrap().len(), 1);
        assert_eq!(s.provenance().unwrap().len(), 2);
        let got = s.get(&a.document_id).unwrap().unwrap();
        assert_eq!(got.url.as_deref(), Some("https://x.example/1"));
    }

    #[test]
    fn one_character_apart_is_two_documents() {
        let dir = tempfile::tempdir().unwrap();
        let s = DocumentStore::open(dir.path()).unwrap();
        s.store(doc("A supplies B", "u")).unwrap();
        s.store(doc("A supplies C", "u")).unwrap();
        assert_eq!(s.ids().unwrap().len(), 2);
    }

    #[test]
    fn empty_text_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let s = DocumentStore::open(dir.path()).unwrap();
        assert!(matches!(s.store(doc("  ", "u")), Err(StorageError::EmptyText)));
        assert!(s.ids().unwrap().is_empty());
    }
}
