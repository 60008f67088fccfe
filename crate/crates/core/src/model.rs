//! Knowledge-graph value types: entities, typed relations and their evidence.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Opaque, content-independent entity identifier. Rendered as `E<n>`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u64);

/// Opaque relation identifier. Rendered as `R<n>`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u64);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIdError;

impl fmt::Display for ParseIdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("malformed identifier")
    }
}

fn parse_prefixed(s: &str, prefix: char) -> Result<u64, ParseIdError> {
    let digits = s
        .strip_prefix(prefix)
        .or_else(|| s.strip_prefix(prefix.to_ascii_lowercase()))
        .unwrap_or(s);
    digits.parse().map_err(|_| ParseIdError)
}

impl FromStr for EntityId {
    type Err = ParseIdError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_prefixed(s, 'E').map(EntityId)
    }
}

impl FromStr for RelationId {
    type Err = ParseIdError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_prefixed(s, 'R').map(RelationId)
    }
}

/// Milliseconds since the Unix epoch. Supplied by the caller; the core never reads a clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

/// Content address of a cleaned document: lowercase hex SHA-256 of its text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocumentId(pub String);

impl DocumentId {
    pub fn for_text(text: &str) -> Self {
        DocumentId(sha256_hex(text.as_bytes()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use core::fmt::Write;
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{:02x}", b);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    Company,
    Product,
    Technology,
    Person,
    Location,
    Factory,
}

impl EntityKind {
    pub const ALL: [EntityKind; 6] = [
        EntityKind::Company,
        EntityKind::Product,
        EntityKind::Technology,
        EntityKind::Person,
        EntityKind::Location,
        EntityKind::Factory,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Company => "Company",
            EntityKind::Product => "Product",
            EntityKind::Technology => "Technology",
            EntityKind::Person => "Person",
            EntityKind::Location => "Location",
            EntityKind::Factory => "Factory",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityKind {
    type Err = ParseIdError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or(ParseIdError)
    }
}

/// Relation taxonomy. Each kind fixes the kinds of its two endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationKind {
    Supply,
    Competitor,
    Partner,
    Produce,
    HasTech,
    Develop,
    HoldShare,
    WorkFor,
    LocatedIn,
    Own,
    Collaborate,
    Use,
}

impl RelationKind {
    pub const ALL: [RelationKind; 12] = [
        RelationKind::Supply,
        RelationKind::Competitor,
        RelationKind::Partner,
        RelationKind::Produce,
        RelationKind::HasTech,
        RelationKind::Develop,
        RelationKind::HoldShare,
        RelationKind::WorkFor,
        RelationKind::LocatedIn,
        RelationKind::Own,
        RelationKind::Collaborate,
        RelationKind::Use,
    ];

    /// `(source kind, target kind)` required by this relation.
    pub fn endpoint_kinds(self) -> (EntityKind, EntityKind) {
        use EntityKind::*;
        match self {
            RelationKind::Supply
            | RelationKind::Competitor
            | RelationKind::Partner
            | RelationKind::HoldShare => (Company, Company),
            RelationKind::Produce | RelationKind::Develop => (Company, Product),
            RelationKind::HasTech => (Company, Technology),
            RelationKind::WorkFor => (Person, Company),
            RelationKind::LocatedIn => (Company, Location),
            RelationKind::Own => (Company, Factory),
            RelationKind::Collaborate => (Person, Person),
            RelationKind::Use => (Product, Technology),
        }
    }

    /// Whether swapping source and target still yields a well-typed relation.
    pub fn direction_flippable(self) -> bool {
        matches!(
            self,
            RelationKind::Supply
                | RelationKind::Partner
                | RelationKind::Competitor
                | RelationKind::HoldShare
                | RelationKind::Collaborate
        )
    }

    pub fn accepts(self, source: EntityKind, target: EntityKind) -> bool {
        self.endpoint_kinds() == (source, target)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Supply => "Supply",
            RelationKind::Competitor => "Competitor",
            RelationKind::Partner => "Partner",
            RelationKind::Produce => "Produce",
            RelationKind::HasTech => "HasTech",
            RelationKind::Develop => "Develop",
            RelationKind::HoldShare => "HoldShare",
            RelationKind::WorkFor => "WorkFor",
            RelationKind::LocatedIn => "LocatedIn",
            RelationKind::Own => "Own",
            RelationKind::Collaborate => "Collaborate",
            RelationKind::Use => "Use",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationKind {
    type Err = ParseIdError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or(ParseIdError)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub kind: EntityKind,
    pub canonical_name: String,
    /// Case-preserved surface forms in first-seen order; always contains `canonical_name`.
    pub aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jurisdiction: Option<String>,
    pub created_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_into: Option<EntityId>,
}

impl Entity {
    pub fn is_live(&self) -> bool {
        self.merged_into.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationStatus {
    Extracted,
    Verified,
    Rejected,
}

impl RelationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationStatus::Extracted => "Extracted",
            RelationStatus::Verified => "Verified",
            RelationStatus::Rejected => "Rejected",
        }
    }

    // Used when two relations are coalesced by a merge.
    pub(crate) fn precedence(self) -> u8 {
        match self {
            RelationStatus::Verified => 2,
            RelationStatus::Extracted => 1,
            RelationStatus::Rejected => 0,
        }
    }
}

impl FromStr for RelationStatus {
    type Err = ParseIdError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            RelationStatus::Extracted,
            RelationStatus::Verified,
            RelationStatus::Rejected,
        ]
        .into_iter()
        .find(|k| k.as_str().eq_ignore_ascii_case(s))
        .ok_or(ParseIdError)
    }
}

/// A verbatim quote tying a relation to a stored document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub document_id: DocumentId,
    pub quote: String,
    /// Character (not byte) offset of the match in the document's cleaned text.
    pub char_offset: u64,
    pub extracted_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
}

impl Evidence {
    pub(crate) fn same_span(&self, other: &Evidence) -> bool {
        self.document_id == other.document_id
            && self.char_offset == other.char_offset
            && self.quote == other.quote
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictOutcome {
    Accept,
    Reject,
    FlipDirection,
}

/// Audit trail left on a relation by the discriminative verification pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub outcome: VerdictOutcome,
    pub confidence: f64,
    pub rationale: String,
    pub judged_at: Timestamp,
    /// Set when a flip collided with an existing reverse relation; evidence went there.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<RelationId>,
}

/// Relation attributes; conflicting values from different extractions are kept side by side.
pub type Attributes = BTreeMap<String, Vec<String>>;

pub(crate) fn merge_attributes(into: &mut Attributes, from: &Attributes) {
    for (key, values) in from {
        let slot = into.entry(key.clone()).or_default();
        for v in values {
            if !slot.contains(v) {
                slot.push(v.clone());
            }
        }
    }
}

/// Turn an LLM-returned JSON attribute object into the stored string form.
pub fn attributes_from_json(map: &BTreeMap<String, serde_json::Value>) -> Attributes {
    map.iter()
        .filter_map(|(k, v)| {
            let text = match v {
                serde_json::Value::Null => return None,
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            Some((k.clone(), alloc::vec![text]))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub id: RelationId,
    pub kind: RelationKind,
    /// For `Supply`, the supplier.
    pub source: EntityId,
    /// For `Supply`, the customer.
    pub target: EntityId,
    pub evidence: Vec<Evidence>,
    pub status: RelationStatus,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: Attributes,
    pub first_seen: Timestamp,
    pub last_seen: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationRecord>,
}

impl Relation {
    pub fn touches(&self, id: EntityId) -> bool {
        self.source == id || self.target == id
    }

    pub fn other_end(&self, id: EntityId) -> Option<EntityId> {
        if self.source == id {
            Some(self.target)
        } else if self.target == id {
            Some(self.source)
        } else {
            None
        }
    }
}
