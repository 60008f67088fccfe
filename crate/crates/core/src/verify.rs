//! Second-pass judgment of extracted relations.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::analytics::precision;
use crate::graph::GraphStore;
use crate::kb::{KbError, KnowledgeBase, Mutation};
use crate::model::{
    Relation, RelationId, RelationKind, RelationStatus, Timestamp, VerdictOutcome,
    VerificationRecord,
};
use crate::provider::{call_structured, CallError, CompletionRequest, LlmProvider};
use crate::resolution::neighbor_summary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointInfo {
    pub name: String,
    pub kind: String,
    #[serde(default)]
    pub jurisdiction: Option<String>,
    pub relations: Vec<String>,
}

/// Everything the judge sees about one relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationInput {
    pub relation_id: RelationId,
    pub kind: RelationKind,
    pub source: EndpointInfo,
    pub target: EndpointInfo,
    pub attributes: BTreeMap<String, Vec<String>>,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: VerdictOutcome,
    pub confidence: f64,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub repair_retries: u32,
    pub neighbor_context: usize,
    pub max_quotes: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            repair_retries: 2,
            neighbor_context: 6,
            max_quotes: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("unknown relation {0}")]
    UnknownRelation(RelationId),
    #[error("relation {id} is {status:?}, only Extracted relations are judged")]
    NotExtracted { id: RelationId, status: RelationStatus },
    #[error(transparent)]
    Call(#[from] CallError),
    #[error(transparent)]
    Kb(#[from] KbError),
}

pub const VERIFY_INSTRUCTION: &str = "You check one relation extracted from text for a supply chain \
knowledge graph. Decide from the quotes and the entity context whether the relation holds as stated \
(accept), does not hold (reject), or holds with source and target swapped (flip). For Supply, the \
source is the supplier and the target is the customer. Answer with a JSON object \
{\"outcome\": \"accept\" | \"reject\" | \"flip\", \"confidence\": number between 0 and 1, \
\"rationale\": string}.";

pub fn verification_input(
    graph: &GraphStore,
    relation: &Relation,
    config: &VerifyConfig,
) -> VerificationInput {
    let endpoint = |id| {
        let e = graph.entity(id);
        EndpointInfo {
            name: e.map_or_else(|| id.to_string(), |e| e.canonical_name.clone()),
            kind: e.map_or_else(String::new, |e| e.kind.as_str().to_string()),
            jurisdiction: e.and_then(|e| e.jurisdiction.clone()),
            relations: neighbor_summary(graph, id, config.neighbor_context),
        }
    };
    VerificationInput {
        relation_id: relation.id,
        kind: relation.kind,
        source: endpoint(relation.source),
        target: endpoint(relation.target),
        attributes: relation.attributes.clone(),
        evidence: relation
            .evidence
            .iter()
            .take(config.max_quotes)
            .map(|e| e.quote.clone())
            .collect(),
    }
}

pub fn verification_request(input: &VerificationInput) -> CompletionRequest {
    let body = serde_json::to_string(input).unwrap_or_default();
    CompletionRequest {
        system: VERIFY_INSTRUCTION.to_string(),
        user: format!("Input:\n{body}"),
        schema_name: "verification".to_string(),
        schema: json!({
            "type": "object",
            "required": ["outcome", "confidence", "rationale"],
            "properties": {
                "outcome": {"enum": ["accept", "reject", "flip"]},
                "confidence": {"type": "number", "minimum": 0, "maximum": 1},
                "rationale": {"type": "string"}
            }
        }),
        temperature: 0.0,
        structured: true,
    }
}

#[derive(Deserialize)]
struct RawVerdict {
    outcome: String,
    confidence: f64,
    #[serde(default)]
    rationale: String,
}

/// Parse a judge answer. A flip on a kind whose direction is fixed is malformed.
pub fn parse_verdict(text: &str, kind: RelationKind) -> Result<Verdict, String> {
    let raw: RawVerdict =
        serde_json::from_str(text).map_err(|e| format!("invalid verdict JSON: {e}"))?;
    let outcome = match raw.outcome.trim().to_ascii_lowercase().as_str() {
        "accept" => VerdictOutcome::Accept,
        "reject" => VerdictOutcome::Reject,
        "flip" | "flip_direction" => VerdictOutcome::FlipDirection,
        other => return Err(format!("unknown outcome {other:?}")),
    };
    if outcome == VerdictOutcome::FlipDirection && !kind.direction_flippable() {
        return Err(format!("{kind} cannot be flipped; answer accept or reject"));
    }
    if !(0.0..=1.0).contains(&raw.confidence) {
        return Err(format!("confidence {} outside [0, 1]", raw.confidence));
    }
    Ok(Verdict {
        outcome,
        confidence: raw.confidence,
        rationale: raw.rationale,
    })
}

/// Judge one Extracted relation and apply the verdict.
pub fn verify_relation<P: LlmProvider + ?Sized>(
    kb: &mut KnowledgeBase,
    id: RelationId,
    provider: &P,
    config: &VerifyConfig,
    at: Timestamp,
) -> Result<Verdict, VerifyError> {
    let rel = kb
        .graph()
        .relation(id)
        .ok_or(VerifyError::UnknownRelation(id))?;
    if rel.status != RelationStatus::Extracted {
        return Err(VerifyError::NotExtracted {
            id,
            status: rel.status,
        });
    }
    let kind = rel.kind;
    let input = verification_input(kb.graph(), rel, config);
    let request = verification_request(&input);
    let verdict = call_structured(provider, &request, config.repair_retries, |t| {
        parse_verdict(t, kind)
    })?
    .value;
    kb.apply(Mutation::JudgeRelation {
        id,
        record: VerificationRecord {
            outcome: verdict.outcome,
            confidence: verdict.confidence,
            rationale: verdict.rationale.clone(),
            judged_at: at,
            duplicate_of: None,
        },
    })?;
    Ok(verdict)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub judged: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub flipped: usize,
    /// Relations left Extracted because the judge call failed.
    pub errors: Vec<(RelationId, String)>,
    /// Precision over the labeled relations judged in this batch.
    pub precision_before: Option<f64>,
    /// Precision over the labeled relations accepted or flipped.
    pub precision_after: Option<f64>,
}

/// Judge every Extracted relation once. `labels` maps relation ids to
/// "this relation is true, possibly after fixing its direction".
pub fn verify_batch<P: LlmProvider + ?Sized>(
    kb: &mut KnowledgeBase,
    provider: &P,
    labels: Option<&BTreeMap<RelationId, bool>>,
    config: &VerifyConfig,
    at: Timestamp,
) -> Result<VerificationReport, KbError> {
    let todo: Vec<RelationId> = kb
        .graph()
        .relations()
        .filter(|r| r.status == RelationStatus::Extracted)
        .map(|r| r.id)
        .collect();
    let mut report = VerificationReport::default();
    let mut kept = Vec::new();
    for id in &todo {
        match verify_relation(kb, *id, provider, config, at) {
            Ok(v) => {
                report.judged += 1;
                match v.outcome {
                    VerdictOutcome::Accept => report.accepted += 1,
                    VerdictOutcome::Reject => report.rejected += 1,
                    VerdictOutcome::FlipDirection => report.flipped += 1,
                }
                if v.outcome != VerdictOutcome::Reject {
                    kept.push(*id);
                }
            }
            Err(VerifyError::Kb(e)) => return Err(e),
            Err(e) => report.errors.push((*id, e.to_string())),
        }
    }
    if let Some(labels) = labels {
        let judged: Vec<RelationId> = todo
            .iter()
            .copied()
            .filter(|id| !report.errors.iter().any(|(e, _)| e == id))
            .collect();
        report.precision_before = labeled_precision(&judged, labels);
        report.precision_after = labeled_precision(&kept, labels);
    }
    Ok(report)
}

fn labeled_precision(ids: &[RelationId], labels: &BTreeMap<RelationId, bool>) -> Option<f64> {
    let (mut tp, mut fp) = (0u64, 0u64);
    for id in ids {
        match labels.get(id) {
            Some(true) => tp += 1,
            Some(false) => fp += 1,
            None => {}
        }
    }
    precision(tp, fp).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AliasPolicy;
    use crate::kb::Applied;
    use crate::model::{DocumentId, EntityId, EntityKind, Evidence};
    use crate::provider::ProviderError;
    use alloc::vec;

    struct ByQuote(BTreeMap<&'static str, &'static str>);

    impl LlmProvider for ByQuote {
        fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
            let body = req.user.split_once('\n').unwrap().1;
            let input: VerificationInput = serde_json::from_str(body).unwrap();
            let outcome = self.0[input.evidence[0].as_str()];
            Ok(format!(
                "{{\"outcome\": \"{outcome}\", \"confidence\": 0.9, \"rationale\": \"\"}}"
            ))
        }
    }

    fn company(kb: &mut KnowledgeBase, name: &str) -> EntityId {
        match kb
            .apply(Mutation::UpsertEntity {
                kind: EntityKind::Company,
                name: name.into(),
                aliases: vec![],
                jurisdiction: None,
                at: Timestamp(0),
            })
            .unwrap()
        {
            Applied::Entity(u) => u.id,
            _ => unreachable!(),
        }
    }

    fn relation(kb: &mut KnowledgeBase, kind: RelationKind, s: EntityId, t: EntityId, q: &str) -> RelationId {
        match kb
            .apply(Mutation::UpsertRelation {
                kind,
                source: s,
                target: t,
                evidence: vec![Evidence {
                    document_id: DocumentId::for_text(q),
                    quote: q.into(),
                    char_offset: 0,
                    extracted_at: Timestamp(0),
                    source_url: None,
                }],
                attributes: Default::default(),
                at: Timestamp(0),
            })
            .unwrap()
        {
            Applied::Relation(u) => u.id,
            _ => unreachable!(),
        }
    }

    #[test]
    fn flip_swaps_direction() {
        let mut kb = KnowledgeBase::new(AliasPolicy::CaseFold);
        let acme = company(&mut kb, "Acme");
        let foo = company(&mut kb, "Foo Corp");
        let id = relation(&mut kb, RelationKind::Supply, foo, acme, "Acme supplies Foo Corp");
        let judge = ByQuote([("Acme supplies Foo Corp", "flip")].into_iter().collect());
        let v = verify_relation(&mut kb, id, &judge, &VerifyConfig::default(), Timestamp(5)).unwrap();
        assert_eq!(v.outcome, VerdictOutcome::FlipDirection);
        let r = kb.graph().relation(id).unwrap();
        assert_eq!((r.source, r.target), (acme, foo));
        assert_eq!(r.status, RelationStatus::Verified);
        assert!(matches!(
            verify_relation(&mut kb, id, &judge, &VerifyConfig::default(), Timestamp(6)),
            Err(VerifyError::NotExtracted { .. })
        ));
    }

    #[test]
    fn flip_on_fixed_direction_kind_is_malformed() {
        assert!(parse_verdict(
            "{\"outcome\":\"flip\",\"confidence\":0.5,\"rationale\":\"\"}",
            RelationKind::Produce
        )
        .is_err());
        assert!(parse_verdict(
            "{\"outcome\":\"flip\",\"confidence\":0.5,\"rationale\":\"\"}",
            RelationKind::Partner
        )
        .is_ok());
        assert!(parse_verdict(
            "{\"outcome\":\"accept\",\"confidence\":1.5,\"rationale\":\"\"}",
            RelationKind::Supply
        )
        .is_err());
    }

    #[test]
    fn empty_batch_reports_zeros() {
        let mut kb = KnowledgeBase::new(AliasPolicy::CaseFold);
        let judge = ByQuote(BTreeMap::new());
        let r = verify_batch(&mut kb, &judge, None, &VerifyConfig::default(), Timestamp(0)).unwrap();
        assert_eq!(r, VerificationReport::default());
    }

    #[test]
    fn labeled_batch_precision_rises() {
        let mut kb = KnowledgeBase::new(AliasPolicy::CaseFold);
        let ids: Vec<EntityId> = (0..11).map(|i| company(&mut kb, &format!("C{i}"))).collect();
        let quotes: [&'static str; 10] = ["q0", "q1", "q2", "q3", "q4", "q5", "q6", "q7", "q8", "q9"];
        let mut outcomes = BTreeMap::new();
        let mut labels = BTreeMap::new();
        for (i, q) in quotes.iter().enumerate() {
            let id = relation(&mut kb, RelationKind::Supply, ids[i], ids[i + 1], q);
            let o = match i {
                7 | 8 => "reject",
                9 => "flip",
                _ => "accept",
            };
            outcomes.insert(*q, o);
            labels.insert(id, o != "reject");
        }
        let judge = ByQuote(outcomes);
        let r = verify_batch(&mut kb, &judge, Some(&labels), &VerifyConfig::default(), Timestamp(1))
            .unwrap();
        assert_eq!((r.accepted, r.rejected, r.flipped), (7, 2, 1));
        assert_eq!(r.judged, 10);
        assert_eq!(r.precision_before, Some(0.8));
        assert_eq!(r.precision_after, Some(1.0));
        assert_eq!(kb.graph().relations().count(), 10);
        let again = verify_batch(&mut kb, &judge, None, &VerifyConfig::default(), Timestamp(2)).unwrap();
        assert_eq!(again.judged, 0);
    }
}
