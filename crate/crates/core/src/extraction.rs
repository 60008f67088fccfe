//! Joint entity/relation extraction: chunking, prompt assembly, payload
//! parsing and the evidence gate.
//!
//! A relation returned by the model is only admitted when its
//! `evidence_quote` occurs in the source document after folding (see
//! [`crate::normalize`]). The recorded offset is the match start in the
//! document's own character coordinates.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::model::{DocumentId, EntityKind, Evidence, RelationKind, Timestamp};
use crate::normalize::{fold, FoldedText};
use crate::provider::{call_structured, CallError, CompletionRequest, LlmProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub max_chars: usize,
    pub overlap: usize,
    /// How far back from the hard limit a chunk end may move to land on a sentence break.
    pub snap_window: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            max_chars: 6000,
            overlap: 300,
            snap_window: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub index: usize,
    /// Character offset of the chunk in the document.
    pub char_offset: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChunkError {
    #[error("chunk size {max_chars} must exceed overlap {overlap}")]
    InvalidConfig { max_chars: usize, overlap: usize },
}

fn is_sentence_end(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\n' | '。' | '！' | '？' | '；')
}

/// Split `text` into overlapping windows of at most `max_chars` characters.
///
/// Consecutive chunks share exactly `overlap` characters. A chunk end is
/// pulled back to the closest sentence break within `snap_window`, as long
/// as the next chunk still starts after the current one.
pub fn chunk_document(text: &str, config: &ChunkConfig) -> Result<Vec<Chunk>, ChunkError> {
    let ChunkConfig {
        max_chars,
        overlap,
        snap_window,
    } = *config;
    if max_chars <= overlap {
        return Err(ChunkError::InvalidConfig { max_chars, overlap });
    }
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(core::iter::once(text.len()))
        .collect();
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();

    let mut chunks = Vec::new();
    let mut start = 0;
    while start < n {
        let end = if n - start <= max_chars {
            n
        } else {
            let hard = start + max_chars;
            let lowest = hard.saturating_sub(snap_window).max(start + overlap + 1);
            (lowest..=hard)
                .rev()
                .find(|&b| is_sentence_end(chars[b - 1]))
                .unwrap_or(hard)
        };
        chunks.push(Chunk {
            index: chunks.len(),
            char_offset: start,
            text: text[bounds[start]..bounds[end]].to_string(),
        });
        if end == n {
            break;
        }
        start = end - overlap;
    }
    Ok(chunks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadEntity {
    pub name: String,
    pub kind: EntityKind,
    #[serde(default)]
    pub attributes: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadRelation {
    pub kind: RelationKind,
    pub source_name: String,
    pub target_name: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, serde_json::Value>,
    pub evidence_quote: String,
}

/// The provider-boundary extraction schema. Field names are fixed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtractionPayload {
    pub entities: Vec<PayloadEntity>,
    pub relations: Vec<PayloadRelation>,
}

impl ExtractionPayload {
    /// Parse and structurally check model output.
    pub fn parse(text: &str) -> Result<Self, String> {
        let payload: ExtractionPayload =
            serde_json::from_str(text).map_err(|e| format!("invalid extraction JSON: {e}"))?;
        payload.check()?;
        Ok(payload)
    }

    fn check(&self) -> Result<(), String> {
        for (i, e) in self.entities.iter().enumerate() {
            if e.name.trim().is_empty() {
                return Err(format!("entities[{i}].name is empty"));
            }
        }
        for (i, r) in self.relations.iter().enumerate() {
            if r.source_name.trim().is_empty() || r.target_name.trim().is_empty() {
                return Err(format!("relations[{i}] has an empty endpoint name"));
            }
            if r.evidence_quote.trim().is_empty() {
                return Err(format!("relations[{i}].evidence_quote is empty"));
            }
        }
        Ok(())
    }

    /// JSON schema handed to structured-output capable providers.
    pub fn json_schema() -> serde_json::Value {
        let entity_kinds: Vec<&str> = EntityKind::ALL.iter().map(|k| k.as_str()).collect();
        let relation_kinds: Vec<&str> = RelationKind::ALL.iter().map(|k| k.as_str()).collect();
        json!({
            "type": "object",
            "required": ["entities", "relations"],
            "properties": {
                "entities": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["name", "kind", "attributes"],
                        "properties": {
                            "name": {"type": "string"},
                            "kind": {"enum": entity_kinds},
                            "attributes": {"type": "object"}
                        }
                    }
                },
                "relations": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["kind", "source_name", "target_name", "attributes", "evidence_quote"],
                        "properties": {
                            "kind": {"enum": relation_kinds},
                            "source_name": {"type": "string"},
                            "target_name": {"type": "string"},
                            "attributes": {"type": "object"},
                            "evidence_quote": {"type": "string"}
                        }
                    }
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotSample {
    pub input_text: String,
    pub expected_payload: ExtractionPayload,
}

/// Industry-specific worked examples shown to the model before the document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FewShotSet {
    pub industry: String,
    pub samples: Vec<FewShotSample>,
}

/// Instruction text; a reconstruction, kept in config so it can be tuned.
pub const DEFAULT_INSTRUCTION: &str = "You extract supply chain knowledge graphs from text. \
Read the document excerpt and report every entity it mentions together with the relationships \
between them, as one JSON object with the fields `entities` and `relations`. \
Give each entity a name exactly as written in the excerpt and one of the allowed kinds. \
For every relationship, copy the words from the excerpt that state it into `evidence_quote`; \
never paraphrase, the quote is checked against the source. \
Report only relationships the excerpt states. \
For Supply the source is the supplier and the target is the customer.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub instruction: String,
    /// Upper bound on the assembled prompt, in characters.
    pub context_budget_chars: usize,
    pub max_few_shot: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            instruction: DEFAULT_INSTRUCTION.to_string(),
            context_budget_chars: 24_000,
            max_few_shot: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_instruction: String,
    pub schema_description: String,
    pub few_shot_samples: Vec<String>,
    pub document_chunk: String,
    pub chunk_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("prompt needs {needed} characters, budget is {budget}")]
    ContextBudgetExceeded { needed: usize, budget: usize },
}

fn schema_description() -> String {
    let mut out = String::from("Output format: {\"entities\": [{\"name\", \"kind\", \"attributes\"}], \"relations\": [{\"kind\", \"source_name\", \"target_name\", \"attributes\", \"evidence_quote\"}]}\n");
    out.push_str("Entity kinds: ");
    let kinds: Vec<&str> = EntityKind::ALL.iter().map(|k| k.as_str()).collect();
    out.push_str(&kinds.join(", "));
    out.push_str("\nRelation kinds (source kind -> target kind):\n");
    for k in RelationKind::ALL {
        let (s, t) = k.endpoint_kinds();
        out.push_str(&format!("- {k}: {s} -> {t}\n"));
    }
    out.push_str("Every relation must name entities listed in `entities` and carry a non-empty `evidence_quote`. ");
    out.push_str("Company entities may carry a `jurisdiction` attribute with an ISO 3166 alpha-2 code.");
    out
}

impl PromptBundle {
    pub fn user_text(&self) -> String {
        let mut out = self.schema_description.clone();
        for (i, sample) in self.few_shot_samples.iter().enumerate() {
            out.push_str(&format!("\n\nExample {}:\n{}", i + 1, sample));
        }
        out.push_str("\n\nDocument excerpt:\n");
        out.push_str(&self.document_chunk);
        out
    }

    pub fn char_len(&self) -> usize {
        self.system_instruction.chars().count() + 2 + self.user_text().chars().count()
    }

    pub fn to_request(&self) -> CompletionRequest {
        CompletionRequest {
            system: self.system_instruction.clone(),
            user: self.user_text(),
            schema_name: "extraction".to_string(),
            schema: ExtractionPayload::json_schema(),
            temperature: 0.0,
            structured: true,
        }
    }
}

/// Assemble instruction, schema, few-shot examples and the chunk, in that order.
pub fn build_prompt(
    chunk: &Chunk,
    few_shot: &FewShotSet,
    config: &PromptConfig,
) -> Result<PromptBundle, PromptError> {
    let samples = few_shot
        .samples
        .iter()
        .take(config.max_few_shot)
        .map(|s| {
            let expected = serde_json::to_string(&s.expected_payload).unwrap_or_default();
            format!("Input:\n{}\nOutput:\n{}", s.input_text, expected)
        })
        .collect();
    let bundle = PromptBundle {
        system_instruction: config.instruction.clone(),
        schema_description: schema_description(),
        few_shot_samples: samples,
        document_chunk: chunk.text.clone(),
        chunk_offset: chunk.char_offset,
    };
    let needed = bundle.char_len();
    if needed > config.context_budget_chars {
        return Err(PromptError::ContextBudgetExceeded {
            needed,
            budget: config.context_budget_chars,
        });
    }
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub payload: ExtractionPayload,
    pub attempts: u32,
}

/// One joint extraction call with up to `repair_retries` repair prompts.
pub fn extract_triplets<P: LlmProvider + ?Sized>(
    bundle: &PromptBundle,
    provider: &P,
    repair_retries: u32,
) -> Result<Extraction, CallError> {
    let out = call_structured(provider, &bundle.to_request(), repair_retries, |text| {
        ExtractionPayload::parse(text)
    })?;
    Ok(Extraction {
        payload: out.value,
        attempts: out.attempts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedTriplet {
    pub relation: PayloadRelation,
    pub source: PayloadEntity,
    pub target: PayloadEntity,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    EvidenceNotFound,
    DanglingEntityRef { name: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedTriplet {
    pub relation: PayloadRelation,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub accepted: Vec<ValidatedTriplet>,
    pub rejected: Vec<RejectedTriplet>,
}

/// The document a payload is checked against.
#[derive(Debug, Clone, Copy)]
pub struct SourceDocument<'a> {
    pub id: &'a DocumentId,
    pub cleaned_text: &'a str,
    pub url: Option<&'a str>,
}

pub fn validate_evidence(
    payload: &ExtractionPayload,
    document: SourceDocument<'_>,
    at: Timestamp,
) -> EvidenceReport {
    let folded_doc = FoldedText::new(document.cleaned_text);
    // exact names first, so "HUAWEI" and "Huawei" stay apart when both are listed
    let exact: BTreeMap<&str, &PayloadEntity> =
        payload.entities.iter().map(|e| (e.name.as_str(), e)).collect();
    let folded: BTreeMap<String, &PayloadEntity> = payload
        .entities
        .iter()
        .map(|e| (fold(&e.name), e))
        .collect();
    let lookup = |name: &str| exact.get(name).or_else(|| folded.get(&fold(name))).copied();

    let mut report = EvidenceReport::default();
    for rel in &payload.relations {
        let source = lookup(&rel.source_name);
        let target = lookup(&rel.target_name);
        let (source, target) = match (source, target) {
            (Some(s), Some(t)) => (s, t),
            (None, _) => {
                report.rejected.push(RejectedTriplet {
                    relation: rel.clone(),
                    reason: RejectReason::DanglingEntityRef {
                        name: rel.source_name.clone(),
                    },
                });
                continue;
            }
            (_, None) => {
                report.rejected.push(RejectedTriplet {
                    relation: rel.clone(),
                    reason: RejectReason::DanglingEntityRef {
                        name: rel.target_name.clone(),
                    },
                });
                continue;
            }
        };
        match folded_doc.find(&fold(&rel.evidence_quote)) {
            Some(offset) => report.accepted.push(ValidatedTriplet {
                relation: rel.clone(),
                source: source.clone(),
                target: target.clone(),
                evidence: Evidence {
                    document_id: document.id.clone(),
                    quote: rel.evidence_quote.clone(),
                    char_offset: offset as u64,
                    extracted_at: at,
                    source_url: document.url.map(ToString::to_string),
                },
            }),
            None => report.rejected.push(RejectedTriplet {
                relation: rel.clone(),
                reason: RejectReason::EvidenceNotFound,
            }),
        }
    }
    report
}

/// Characters a stored offset may drift from a fresh match and still count.
pub const EVIDENCE_OFFSET_TOLERANCE: u64 = 32;

/// Re-run the evidence check on stored evidence against its document text.
pub fn recheck_evidence(evidence: &Evidence, cleaned_text: &str) -> bool {
    let needle = fold(&evidence.quote);
    if needle.is_empty() || DocumentId::for_text(cleaned_text) != evidence.document_id {
        return false;
    }
    FoldedText::new(cleaned_text)
        .find_all(&needle)
        .into_iter()
        .any(|at| (at as u64).abs_diff(evidence.char_offset) <= EVIDENCE_OFFSET_TOLERANCE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn doc_text(n: usize) -> String {
        // no sentence terminators, so no snapping
        (0..n).map(|i| (b'a' + (i % 26) as u8) as char).collect()
    }

    #[test]
    fn short_document_is_one_chunk() {
        let text = doc_text(100);
        let cfg = ChunkConfig {
            max_chars: 200,
            overlap: 20,
            snap_window: 50,
        };
        let chunks = chunk_document(&text, &cfg).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, text);
        assert_eq!(chunks[0].char_offset, 0);
    }

    #[test]
    fn two_chunks_share_the_overlap() {
        let text = doc_text(500);
        let cfg = ChunkConfig {
            max_chars: 300,
            overlap: 50,
            snap_window: 40,
        };
        let chunks = chunk_document(&text, &cfg).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].char_offset, 0);
        assert_eq!(chunks[0].text.len(), 300);
        assert_eq!(chunks[1].char_offset, 250);
        assert_eq!(chunks[1].text.len(), 250);
        // characters 250..300 are in both
        assert_eq!(&chunks[0].text[250..300], &chunks[1].text[..50]);
        assert_eq!(&chunks[1].text[..50], &text[250..300]);
    }

    #[test]
    fn chunk_end_snaps_to_sentence_break() {
        let mut text = String::new();
        text.push_str(&"x".repeat(280));
        text.push_str(". ");
        text.push_str(&"y".repeat(300));
        let cfg = ChunkConfig {
            max_chars: 300,
            overlap: 10,
            snap_window: 40,
        };
        let chunks = chunk_document(&text, &cfg).unwrap();
        assert!(chunks[0].text.ends_with('.'));
        assert_eq!(chunks[0].text.chars().count(), 281);
        assert_eq!(chunks[1].char_offset, 271);
    }

    #[test]
    fn invalid_chunk_config() {
        let cfg = ChunkConfig {
            max_chars: 10,
            overlap: 10,
            snap_window: 0,
        };
        assert!(chunk_document("abc", &cfg).is_err());
    }

    fn payload() -> ExtractionPayload {
        ExtractionPayload {
            entities: vec![
                PayloadEntity {
                    name: "Acme".into(),
                    kind: EntityKind::Company,
                    attributes: BTreeMap::new(),
                },
                PayloadEntity {
                    name: "Foo Corp".into(),
                    kind: EntityKind::Company,
                    attributes: BTreeMap::new(),
                },
            ],
            relations: vec![PayloadRelation {
                kind: RelationKind::Supply,
                source_name: "Acme".into(),
                target_name: "Foo Corp".into(),
                attributes: BTreeMap::new(),
                evidence_quote: "supplies Foo Corp".into(),
            }],
        }
    }

    fn check(quote: &str, text: &str) -> EvidenceReport {
        let mut p = payload();
        p.relations[0].evidence_quote = quote.into();
        let id = DocumentId::for_text(text);
        validate_evidence(
            &p,
            SourceDocument {
                id: &id,
                cleaned_text: text,
                url: Some("https://example.com/a"),
            },
            Timestamp(9),
        )
    }

    const DOC: &str = "Acme supplies Foo Corp with chips";

    #[test]
    fn evidence_substring_accepted_with_offset() {
        let r = check("supplies Foo Corp", DOC);
        assert_eq!(r.accepted.len(), 1);
        assert_eq!(r.accepted[0].evidence.char_offset, 5);
        assert_eq!(
            r.accepted[0].evidence.source_url.as_deref(),
            Some("https://example.com/a")
        );
        assert!(recheck_evidence(&r.accepted[0].evidence, DOC));
    }

    #[test]
    fn evidence_absent_rejected() {
        let r = check("supplies Bar Inc", DOC);
        assert!(r.accepted.is_empty());
        assert_eq!(r.rejected[0].reason, RejectReason::EvidenceNotFound);
    }

    #[test]
    fn evidence_normalization_table() {
        // folded by hand: "\u{201C}acme\u{201D}  supplies" -> "\"acme\" supplies"
        let text = "He said \u{201C}Acme\u{201D}  supplies\tFoo\u{2014}Corp units.";
        let r = check("\"ACME\" supplies Foo-Corp", text);
        assert_eq!(r.accepted.len(), 1, "{:?}", r.rejected);
        assert_eq!(r.accepted[0].evidence.char_offset, 8);
    }

    #[test]
    fn dangling_entity_reference_rejected() {
        let mut p = payload();
        p.relations[0].target_name = "Bar Inc".into();
        let id = DocumentId::for_text(DOC);
        let r = validate_evidence(
            &p,
            SourceDocument {
                id: &id,
                cleaned_text: DOC,
                url: None,
            },
            Timestamp(0),
        );
        assert_eq!(
            r.rejected[0].reason,
            RejectReason::DanglingEntityRef {
                name: "Bar Inc".into()
            }
        );
    }

    #[test]
    fn recheck_catches_corrupted_quote() {
        let r = check("supplies Foo Corp", DOC);
        let mut ev = r.accepted[0].evidence.clone();
        ev.quote = "supplies Foo Corporation".into();
        assert!(!recheck_evidence(&ev, DOC));
    }

    #[test]
    fn prompt_is_deterministic_and_ordered() {
        let chunk = Chunk {
            index: 0,
            char_offset: 0,
            text: DOC.into(),
        };
        let shots = FewShotSet {
            industry: "semiconductor".into(),
            samples: vec![FewShotSample {
                input_text: "X sells wafers to Y.".into(),
                expected_payload: payload(),
            }],
        };
        let cfg = PromptConfig::default();
        let a = build_prompt(&chunk, &shots, &cfg).unwrap();
        let b = build_prompt(&chunk, &shots, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_request().prompt_text(), b.to_request().prompt_text());
        let user = a.user_text();
        let schema_at = user.find("Output format").unwrap();
        let example_at = user.find("Example 1").unwrap();
        let doc_at = user.find("Document excerpt").unwrap();
        assert!(schema_at < example_at && example_at < doc_at);
        assert!(user.ends_with(DOC));
    }

    #[test]
    fn zero_shot_bundle_is_schema_only() {
        let chunk = Chunk {
            index: 0,
            char_offset: 0,
            text: DOC.into(),
        };
        let b = build_prompt(&chunk, &FewShotSet::default(), &PromptConfig::default()).unwrap();
        assert!(b.few_shot_samples.is_empty());
        assert!(!b.user_text().contains("Example 1"));
    }

    #[test]
    fn oversized_prompt_rejected() {
        let chunk = Chunk {
            index: 0,
            char_offset: 0,
            text: "z".repeat(30_000),
        };
        let err = build_prompt(&chunk, &FewShotSet::default(), &PromptConfig::default())
            .unwrap_err();
        assert!(matches!(err, PromptError::ContextBudgetExceeded { .. }));
    }

    #[test]
    fn payload_parse_checks_structure() {
        let ok = serde_json::to_string(&payload()).unwrap();
        assert!(ExtractionPayload::parse(&ok).is_ok());
        assert!(ExtractionPayload::parse("{\"entities\": []}").is_err());
        let bad_kind = ok.replace("\"Supply\"", "\"Sells\"");
        assert!(ExtractionPayload::parse(&bad_kind).is_err());
        let empty_quote = ok.replace("supplies Foo Corp", " ");
        assert!(ExtractionPayload::parse(&empty_quote).is_err());
    }
}
