//! Deterministic offline providers for fixtures and demos.
//!
//! [`ScriptedLlm`] answers the three prompt families (extraction, synonym,
//! verification) with simple rules instead of a model. [`FixtureWeb`] serves
//! search results and pages from a corpus file. Together they can be wrapped
//! in the recording providers to produce cassettes.
//!
//! Extraction reads one statement per line of the document excerpt:
//!
//! | line                          | relation              |
//! |-------------------------------|-----------------------|
//! | `A supplies B [with P]`       | Supply A -> B         |
//! | `A buys P from B`             | Supply B -> A         |
//! | `A is a customer of B`        | Supply B -> A         |
//! | `A's supplier is B`           | Supply B -> A         |
//! | `A competes with B`           | Competitor A -> B     |
//! | `A partners with B`           | Partner A -> B        |
//! | `A produces P`                | Produce A -> P        |
//!
//! A line starting with `Reportedly,` yields a relation whose quote does not
//! occur in the text, the way a hallucinating model would.

use std::collections::BTreeMap;
use std::path::Path;

use sckg_core::extraction::{ExtractionPayload, PayloadEntity, PayloadRelation};
use sckg_core::harvest::SearchResult;
use sckg_core::model::{EntityKind, RelationKind};
use sckg_core::normalize::{fold, NameNormalizer};
use sckg_core::provider::{CompletionRequest, LlmProvider, ProviderError, ProviderErrorKind};
use sckg_core::verify::VerificationInput;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::FetchConfig;
use crate::fetch::{check_url, FetchError, Fetcher, RawDocument};
use crate::search::SearchProvider;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictOverride {
    pub source: String,
    pub kind: RelationKind,
    pub target: String,
    /// `accept`, `reject` or `flip`.
    pub outcome: String,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynonymOverride {
    pub a: String,
    pub b: String,
    pub is_synonym: bool,
}

/// Knobs for [`ScriptedLlm`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Script {
    /// Jurisdiction codes attached to extracted companies, by name.
    pub jurisdictions: BTreeMap<String, String>,
    pub verdicts: Vec<VerdictOverride>,
    pub synonyms: Vec<SynonymOverride>,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedLlm {
    script: Script,
    normalizer: NameNormalizer,
}

const EXCERPT: &str = "\n\nDocument excerpt:\n";
const REPAIR: &str = "\n\nYour previous answer was rejected: ";

fn bad(msg: impl Into<String>) -> ProviderError {
    ProviderError::new(ProviderErrorKind::BadResponse, msg)
}

fn input_json(user: &str) -> Result<Value, ProviderError> {
    let body = user
        .strip_prefix("Input:\n")
        .ok_or_else(|| bad("prompt has no Input block"))?;
    let body = body.split(REPAIR).next().unwrap_or(body);
    serde_json::from_str(body).map_err(|e| bad(format!("unreadable input block: {e}")))
}

/// One recognised statement.
struct Statement {
    kind: RelationKind,
    source: String,
    target: String,
    product: Option<String>,
}

fn split2<'a>(s: &'a str, sep: &str) -> Option<(&'a str, &'a str)> {
    let (a, b) = s.split_once(sep)?;
    let (a, b) = (a.trim(), b.trim());
    (!a.is_empty() && !b.is_empty()).then_some((a, b))
}

fn parse_statement(line: &str) -> Option<Statement> {
    let st = |kind, source: &str, target: &str, product: Option<&str>| Statement {
        kind,
        source: source.to_string(),
        target: target.to_string(),
        product: product.map(str::to_string),
    };
    if let Some((a, rest)) = split2(line, " supplies ") {
        return Some(match split2(rest, " with ") {
            Some((b, p)) => st(RelationKind::Supply, a, b, Some(p)),
            None => st(RelationKind::Supply, a, rest, None),
        });
    }
    if let Some((a, rest)) = split2(line, " buys ") {
        let (p, b) = split2(rest, " from ")?;
        return Some(st(RelationKind::Supply, b, a, Some(p)));
    }
    if let Some((a, b)) = split2(line, " is a customer of ") {
        return Some(st(RelationKind::Supply, b, a, None));
    }
    if let Some((a, b)) = split2(line, "'s supplier is ") {
        return Some(st(RelationKind::Supply, b, a, None));
    }
    if let Some((a, b)) = split2(line, " competes with ") {
        return Some(st(RelationKind::Competitor, a, b, None));
    }
    if let Some((a, b)) = split2(line, " partners with ") {
        return Some(st(RelationKind::Partner, a, b, None));
    }
    if let Some((a, p)) = split2(line, " produces ") {
        return Some(st(RelationKind::Produce, a, p, None));
    }
    None
}

impl ScriptedLlm {
    pub fn new(script: Script) -> Self {
        ScriptedLlm {
            script,
            normalizer: NameNormalizer::default(),
        }
    }

    fn jurisdiction(&self, name: &str) -> Option<&String> {
        let key = fold(name);
        self.script
            .jurisdictions
            .iter()
            .find(|(n, _)| fold(n) == key)
            .map(|(_, j)| j)
    }

    pub fn extract(&self, excerpt: &str) -> ExtractionPayload {
        let mut payload = ExtractionPayload::default();
        let add_entity = |payload: &mut ExtractionPayload, name: &str, kind: EntityKind| {
            if payload.entities.iter().any(|e| e.name == name) {
                return;
            }
            let mut attributes = BTreeMap::new();
            if kind == EntityKind::Company {
                if let Some(j) = self.jurisdiction(name) {
                    attributes.insert("jurisdiction".to_string(), json!(j));
                }
            }
            payload.entities.push(PayloadEntity {
                name: name.to_string(),
                kind,
                attributes,
            });
        };
        for raw in excerpt.lines() {
            let line = raw.trim().trim_end_matches('.').replace('\u{2019}', "'");
            let (line, invented) = match line.strip_prefix("Reportedly, ") {
                Some(rest) => (rest.to_string(), true),
                None => (line, false),
            };
            let Some(s) = parse_statement(&line) else {
                continue;
            };
            let (_, target_kind) = s.kind.endpoint_kinds();
            add_entity(&mut payload, &s.source, EntityKind::Company);
            add_entity(&mut payload, &s.target, target_kind);
            let mut attributes = BTreeMap::new();
            if let Some(p) = &s.product {
                attributes.insert("product".to_string(), json!(p));
            }
            let evidence_quote = if invented {
                format!("{} has long relied on {}", s.target, s.source)
            } else {
                line.clone()
            };
            payload.relations.push(PayloadRelation {
                kind: s.kind,
                source_name: s.source,
                target_name: s.target,
                attributes,
                evidence_quote,
            });
        }
        payload
    }

    fn synonym(&self, user: &str) -> Result<Value, ProviderError> {
        let input = input_json(user)?;
        let names = |side: &str| -> Vec<String> {
            let e = &input[side];
            let mut out: Vec<String> = e["name"].as_str().map(str::to_string).into_iter().collect();
            if let Some(a) = e["aliases"].as_array() {
                out.extend(a.iter().filter_map(|v| v.as_str().map(str::to_string)));
            }
            out
        };
        let (a, b) = (names("entity_a"), names("entity_b"));
        let (na, nb) = (a.first().cloned().unwrap_or_default(), b.first().cloned().unwrap_or_default());
        if let Some(o) = self.script.synonyms.iter().find(|o| {
            (fold(&o.a) == fold(&na) && fold(&o.b) == fold(&nb))
                || (fold(&o.a) == fold(&nb) && fold(&o.b) == fold(&na))
        }) {
            return Ok(json!({"is_synonym": o.is_synonym, "rationale": "scripted"}));
        }
        let shared = a.iter().find_map(|x| {
            let kx = self.normalizer.key(x);
            b.iter()
                .any(|y| !kx.is_empty() && self.normalizer.key(y) == kx)
                .then_some(kx)
        });
        Ok(match shared {
            Some(k) => json!({"is_synonym": true, "rationale": format!("both normalize to \"{k}\"")}),
            None => json!({"is_synonym": false, "rationale": "names do not normalize to the same key"}),
        })
    }

    fn verify(&self, user: &str) -> Result<Value, ProviderError> {
        let input: VerificationInput = serde_json::from_value(input_json(user)?)
            .map_err(|e| bad(format!("not a verification input: {e}")))?;
        let hit = self.script.verdicts.iter().find(|o| {
            o.kind == input.kind
                && fold(&o.source) == fold(&input.source.name)
                && fold(&o.target) == fold(&input.target.name)
        });
        Ok(match hit {
            Some(o) => json!({
                "outcome": o.outcome,
                "confidence": 0.8,
                "rationale": if o.rationale.is_empty() { "scripted" } else { &o.rationale },
            }),
            None => json!({
                "outcome": "accept",
                "confidence": 0.9,
                "rationale": "the quotes state the relation",
            }),
        })
    }
}

impl LlmProvider for ScriptedLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let value = match request.schema_name.as_str() {
            "extraction" => {
                let start = request
                    .user
                    .rfind(EXCERPT)
                    .ok_or_else(|| bad("prompt has no document excerpt"))?;
                let excerpt = &request.user[start + EXCERPT.len()..];
                let excerpt = excerpt.split(REPAIR).next().unwrap_or(excerpt);
                serde_json::to_value(self.extract(excerpt)).expect("payload serializes")
            }
            "synonym" => self.synonym(&request.user)?,
            "verification" => self.verify(&request.user)?,
            other => return Err(bad(format!("unknown task {other}"))),
        };
        Ok(value.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixturePage {
    pub url: String,
    #[serde(default = "default_type")]
    pub content_type: String,
    pub title: String,
    /// Companies whose searches return this page.
    pub about: Vec<String>,
    pub body: String,
}

fn default_type() -> String {
    "text/html; charset=utf-8".into()
}

/// Pages plus the scripted model behaviour for one fixture world.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Corpus {
    pub script: Script,
    pub pages: Vec<FixturePage>,
}

impl Corpus {
    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Search and fetch over a fixed set of pages.
///
/// A query matches a page when the query minus its last word equals one of
/// the page's `about` names, so templates like `{c} suppliers` work while
/// `Huawei Technologies suppliers` does not hit pages about `Huawei`.
#[derive(Debug, Clone)]
pub struct FixtureWeb {
    pages: Vec<FixturePage>,
    config: FetchConfig,
}

impl FixtureWeb {
    pub fn new(pages: Vec<FixturePage>, config: FetchConfig) -> Self {
        FixtureWeb { pages, config }
    }
}

impl SearchProvider for FixtureWeb {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, ProviderError> {
        let q = fold(query);
        let Some((subject, _)) = q.rsplit_once(' ') else {
            return Ok(Vec::new());
        };
        Ok(self
            .pages
            .iter()
            .filter(|p| p.about.iter().any(|a| fold(a) == subject))
            .take(limit)
            .enumerate()
            .map(|(i, p)| SearchResult {
                url: p.url.clone(),
                title: p.title.clone(),
                snippet: String::new(),
                rank: i as u32 + 1,
            })
            .collect())
    }
}

impl Fetcher for FixtureWeb {
    fn fetch(&self, url: &str) -> Result<RawDocument, FetchError> {
        check_url(url, &self.config)?;
        let page = self.pages.iter().find(|p| p.url == url).ok_or_else(|| FetchError::FetchFailed {
            url: url.into(),
            attempts: 1,
            message: "HTTP 404".into(),
        })?;
        Ok(RawDocument {
            url: url.into(),
            status: 200,
            content_type: Some(page.content_type.clone()),
            body: page.body.clone().into_bytes(),
        })
    }
}
