//! Seeds, search keywords and search results.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use alloc::collections::BTreeSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Entity, EntityId, EntityKind};

/// One company from an industry report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub company_name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub industry: Option<String>,
    #[serde(default)]
    pub jurisdiction: Option<String>,
    #[serde(default)]
    pub source_report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeedError {
    #[error("seed company name is empty")]
    EmptyName,
}

impl SeedRecord {
    pub fn validate(&self) -> Result<(), SeedError> {
        if self.company_name.trim().is_empty() {
            return Err(SeedError::EmptyName);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordTemplate {
    pub id: String,
    /// Query text with `{c}` standing for the company alias.
    pub pattern: String,
    pub language: String,
}

impl KeywordTemplate {
    pub fn new(id: &str, pattern: &str, language: &str) -> Self {
        KeywordTemplate {
            id: id.to_string(),
            pattern: pattern.to_string(),
            language: language.to_string(),
        }
    }

    pub fn instantiate(&self, alias: &str) -> String {
        if self.pattern.contains("{c}") {
            self.pattern.replace("{c}", alias)
        } else {
            let mut s = alias.to_string();
            s.push(' ');
            s.push_str(&self.pattern);
            s
        }
    }
}

/// English and Chinese variants of the supplier and customer queries.
pub fn default_templates() -> Vec<KeywordTemplate> {
    [
        ("en-suppliers", "{c} suppliers", "en"),
        ("en-supplier-list", "{c} supplier list", "en"),
        ("en-customers", "{c} customers", "en"),
        ("en-supply-chain", "{c} supply chain", "en"),
        ("zh-suppliers", "{c} 供应商", "zh"),
        ("zh-supplier-list", "{c} 供应商名单", "zh"),
        ("zh-customers", "{c} 客户", "zh"),
        ("zh-supply-chain", "{c} 供应链", "zh"),
    ]
    .iter()
    .map(|(id, p, l)| KeywordTemplate::new(id, p, l))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordQuery {
    pub company_id: EntityId,
    pub template_id: String,
    pub query_text: String,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeywordError {
    #[error("no keyword templates configured")]
    EmptyTemplateSet,
    #[error("{0} is a {1}, keywords are generated for companies only")]
    NotACompany(EntityId, EntityKind),
}

/// Aliases × templates, in alias order then template order, deduplicated by
/// query text. `max_aliases` caps the aliases used (canonical name first).
pub fn generate_keywords(
    company: &Entity,
    templates: &[KeywordTemplate],
    max_aliases: Option<usize>,
) -> Result<Vec<KeywordQuery>, KeywordError> {
    if templates.is_empty() {
        return Err(KeywordError::EmptyTemplateSet);
    }
    if company.kind != EntityKind::Company {
        return Err(KeywordError::NotACompany(company.id, company.kind));
    }
    let mut aliases: Vec<&str> = Vec::new();
    aliases.push(company.canonical_name.as_str());
    for a in &company.aliases {
        if !aliases.contains(&a.as_str()) {
            aliases.push(a);
        }
    }
    if let Some(cap) = max_aliases {
        aliases.truncate(cap.max(1));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for alias in aliases {
        for t in templates {
            let text = t.instantiate(alias);
            if seen.insert(text.clone()) {
                out.push(KeywordQuery {
                    company_id: company.id,
                    template_id: t.id.clone(),
                    query_text: text,
                    language: t.language.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Cassette key for a search query: folded with whitespace collapsed.
pub fn normalize_query(query: &str) -> String {
    crate::normalize::fold(query)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub url: String,
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    pub rank: u32,
}

/// Sort by rank, drop duplicate ranks and rank 0, then truncate to `limit`.
pub fn normalize_results(mut results: Vec<SearchResult>, limit: usize) -> Vec<SearchResult> {
    results.retain(|r| r.rank >= 1);
    results.sort_by_key(|r| r.rank);
    results.dedup_by_key(|r| r.rank);
    results.truncate(limit);
    results
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Timestamp;
    use alloc::vec;

    fn company(name: &str, aliases: &[&str]) -> Entity {
        let mut all = vec![name.to_string()];
        all.extend(aliases.iter().map(|a| a.to_string()));
        Entity {
            id: EntityId(1),
            kind: EntityKind::Company,
            canonical_name: name.into(),
            aliases: all,
            jurisdiction: None,
            created_at: Timestamp(0),
            merged_into: None,
        }
    }

    #[test]
    fn template_instantiation() {
        let t = vec![
            KeywordTemplate::new("s", "{c} suppliers", "en"),
            KeywordTemplate::new("c", "{c} customers", "en"),
        ];
        let q = generate_keywords(&company("TSMC", &[]), &t, None).unwrap();
        let texts: Vec<_> = q.iter().map(|q| q.query_text.as_str()).collect();
        assert_eq!(texts, ["TSMC suppliers", "TSMC customers"]);
    }

    #[test]
    fn each_alias_gets_its_own_query() {
        let t = vec![KeywordTemplate::new("s", "{c} suppliers", "en")];
        let q = generate_keywords(&company("Huawei", &["HUAWEI"]), &t, None).unwrap();
        assert_eq!(q.len(), 2);
        assert_ne!(q[0].query_text, q[1].query_text);
    }

    #[test]
    fn bilingual_templates_carry_language() {
        let t = vec![
            KeywordTemplate::new("en-s", "{c} suppliers", "en"),
            KeywordTemplate::new("en-c", "{c} customers", "en"),
            KeywordTemplate::new("zh-s", "{c} 供应商", "zh"),
            KeywordTemplate::new("zh-c", "{c} 客户", "zh"),
        ];
        let q = generate_keywords(&company("Acme", &[]), &t, None).unwrap();
        let langs: Vec<_> = q.iter().map(|q| q.language.as_str()).collect();
        assert_eq!(langs, ["en", "en", "zh", "zh"]);
        assert_eq!(q[2].query_text, "Acme 供应商");
    }

    #[test]
    fn empty_templates_rejected() {
        assert_eq!(
            generate_keywords(&company("Acme", &[]), &[], None),
            Err(KeywordError::EmptyTemplateSet)
        );
    }

    #[test]
    fn results_truncate_by_rank() {
        let r = |rank| SearchResult {
            url: alloc::format!("https://x/{rank}"),
            title: String::new(),
            snippet: String::new(),
            rank,
        };
        let out = normalize_results(vec![r(3), r(1), r(2)], 1);
        assert_eq!(out, vec![r(1)]);
    }
}
