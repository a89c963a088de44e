//! Domain-neutral records shared by every workbench component.
//!
//! A [`DomainObject`] is the finest-grained thing under study (for the
//! photoacid-generator use case, one molecule identified by its SMILES
//! text). A [`Characterization`] is one attribute snapshot of an object, a
//! [`Dataset`] an ordered selection of characterizations, and a [`Study`]
//! groups datasets together with the log of activities that produced them.
//!
//! All records are plain values; persistence and reference checks live in
//! [`crate::store`].

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::id::{Id, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("study goal must not be empty")]
    EmptyGoal,

    #[error("external key must not be empty")]
    EmptyKey,

    #[error("member {0} is not part of the parent dataset")]
    UnknownMember(Id),

    #[error("member {0} appears more than once")]
    DuplicateMember(Id),

    #[error("attribute {name}: {reason}")]
    InvalidAttribute { name: String, reason: String },

    #[error("activity {0} failed without an error message")]
    MissingFailureReason(Id),

    #[error("malformed filter: {0}")]
    MalformedFilter(String),

    #[error("malformed input: {0}")]
    MalformedInput(String),
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::EmptyGoal => "empty-goal",
            ModelError::EmptyKey => "empty-key",
            ModelError::UnknownMember(_) => "unknown-member",
            ModelError::DuplicateMember(_) => "duplicate-member",
            ModelError::InvalidAttribute { .. } => "invalid-attribute",
            ModelError::MissingFailureReason(_) => "missing-failure-reason",
            ModelError::MalformedFilter(_) => "malformed-filter",
            ModelError::MalformedInput(_) => "malformed-input",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainObject {
    pub id: Id,
    /// Short tag such as `molecule-cation`.
    pub kind: String,
    /// Canonical external representation; for molecules the SMILES text,
    /// treated as an opaque key.
    pub external_key: String,
}

impl DomainObject {
    pub fn new(id: Id, kind: impl Into<String>, external_key: impl Into<String>) -> Result<Self, ModelError> {
        let external_key = external_key.into();
        if external_key.is_empty() {
            return Err(ModelError::EmptyKey);
        }
        Ok(Self {
            id,
            kind: kind.into(),
            external_key,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Numeric,
    Categorical,
    Text,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Value {
    Numeric(f64),
    Categorical(String),
    Text(String),
    Boolean(bool),
}

impl Value {
    pub fn kind(&self) -> AttributeKind {
        match self {
            Value::Numeric(_) => AttributeKind::Numeric,
            Value::Categorical(_) => AttributeKind::Categorical,
            Value::Text(_) => AttributeKind::Text,
            Value::Boolean(_) => AttributeKind::Boolean,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Numeric(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Categorical(s) | Value::Text(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeValue {
    #[serde(flatten)]
    pub value: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl AttributeValue {
    pub fn numeric(v: f64) -> Self {
        Self {
            value: Value::Numeric(v),
            unit: None,
        }
    }

    pub fn with_unit(v: f64, unit: impl Into<String>) -> Self {
        Self {
            value: Value::Numeric(v),
            unit: Some(unit.into()),
        }
    }

    pub fn categorical(s: impl Into<String>) -> Self {
        Self {
            value: Value::Categorical(s.into()),
            unit: None,
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        Self {
            value: Value::Text(s.into()),
            unit: None,
        }
    }

    pub fn boolean(b: bool) -> Self {
        Self {
            value: Value::Boolean(b),
            unit: None,
        }
    }

    fn validate(&self, name: &str) -> Result<(), ModelError> {
        let invalid = |reason: &str| ModelError::InvalidAttribute {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        match &self.value {
            Value::Numeric(v) if !v.is_finite() => Err(invalid("numeric value is not finite")),
            Value::Numeric(_) => Ok(()),
            _ if self.unit.is_some() => Err(invalid("only numeric attributes carry units")),
            _ => Ok(()),
        }
    }
}

/// Declared vocabularies for categorical attributes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeRegistry {
    vocabularies: BTreeMap<String, BTreeSet<String>>,
}

impl AttributeRegistry {
    pub fn declare(&mut self, attribute: impl Into<String>, vocabulary: impl IntoIterator<Item = impl Into<String>>) {
        self.vocabularies
            .insert(attribute.into(), vocabulary.into_iter().map(Into::into).collect());
    }

    pub fn vocabulary(&self, attribute: &str) -> Option<&BTreeSet<String>> {
        self.vocabularies.get(attribute)
    }

    /// Checks value invariants and, where a vocabulary is registered,
    /// categorical membership.
    pub fn validate(&self, ch: &Characterization) -> Result<(), ModelError> {
        for (name, attr) in &ch.attributes {
            attr.validate(name)?;
            if let (Value::Categorical(v), Some(vocab)) = (&attr.value, self.vocabularies.get(name)) {
                if !vocab.contains(v) {
                    return Err(ModelError::InvalidAttribute {
                        name: name.clone(),
                        reason: format!("{v:?} is not in the declared vocabulary"),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "lowercase")]
pub enum ProvenanceSource {
    /// Synthetic provenance for externally ingested data.
    Ingest,
    Operation(Id),
    Activity(Id),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: ProvenanceSource,
    pub at: Timestamp,
}

/// An attribute-value snapshot of one domain object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Characterization {
    pub id: Id,
    pub object_id: Id,
    /// Keyed by attribute name, so names are unique by construction.
    /// Characterizations may be partial.
    pub attributes: BTreeMap<String, AttributeValue>,
    pub provenance: Provenance,
}

impl Characterization {
    pub fn new(id: Id, object_id: Id, provenance: Provenance) -> Self {
        Self {
            id,
            object_id,
            attributes: BTreeMap::new(),
            provenance,
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: AttributeValue) -> Self {
        self.attributes.insert(name.into(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&AttributeValue> {
        self.attributes.get(name)
    }

    pub fn numeric(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(|a| a.value.as_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub parent: Id,
    pub operation: Id,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub id: Id,
    pub name: String,
    pub member_ids: Vec<Id>,
    #[serde(default)]
    pub lineage: Vec<LineageEntry>,
}

impl Dataset {
    /// A root dataset (no lineage).
    pub fn root(id: Id, name: impl Into<String>, member_ids: Vec<Id>) -> Result<Self, ModelError> {
        let ds = Self {
            id,
            name: name.into(),
            member_ids,
            lineage: Vec::new(),
        };
        ds.check_unique_members()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }

    pub fn member_set(&self) -> HashSet<Id> {
        self.member_ids.iter().copied().collect()
    }

    pub fn check_unique_members(&self) -> Result<(), ModelError> {
        let mut seen = HashSet::with_capacity(self.member_ids.len());
        for &m in &self.member_ids {
            if !seen.insert(m) {
                return Err(ModelError::DuplicateMember(m));
            }
        }
        Ok(())
    }
}

/// Derives a child dataset holding `subset` of `parent`'s members, in the
/// order given, with a lineage entry pointing back at `parent`.
pub fn derive_dataset(
    parent: &Dataset,
    subset: &[Id],
    operation: Id,
    id: Id,
    name: impl Into<String>,
) -> Result<Dataset, ModelError> {
    let members = parent.member_set();
    if let Some(&foreign) = subset.iter().find(|m| !members.contains(m)) {
        return Err(ModelError::UnknownMember(foreign));
    }
    let child = Dataset {
        id,
        name: name.into(),
        member_ids: subset.to_vec(),
        lineage: vec![LineageEntry {
            parent: parent.id,
            operation,
        }],
    };
    child.check_unique_members()?;
    Ok(child)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Study {
    pub id: Id,
    pub goal: String,
    pub dataset_ids: Vec<Id>,
    /// Append-only; records are superseded, never edited in place.
    pub activity_log: Vec<Id>,
    pub participants: Vec<String>,
}

impl Study {
    pub fn new(id: Id, goal: impl Into<String>, participants: Vec<String>) -> Result<Self, ModelError> {
        let goal = goal.into();
        if goal.trim().is_empty() {
            return Err(ModelError::EmptyGoal);
        }
        Ok(Self {
            id,
            goal,
            dataset_ids: Vec::new(),
            activity_log: Vec::new(),
            participants,
        })
    }

    /// Appends an activity and the datasets it produced.
    pub fn log_activity(&mut self, activity: &ActivityRecord) {
        self.activity_log.push(activity.id);
        for &out in &activity.output_dataset_ids {
            if !self.dataset_ids.contains(&out) {
                self.dataset_ids.push(out);
            }
        }
    }

    /// Reconstructs the dataset list by replaying the activity log.
    pub fn replay_datasets<'a>(&self, lookup: impl Fn(&Id) -> Option<&'a ActivityRecord>) -> Vec<Id> {
        let mut datasets = Vec::new();
        for id in &self.activity_log {
            if let Some(activity) = lookup(id) {
                for &out in &activity.output_dataset_ids {
                    if !datasets.contains(&out) {
                        datasets.push(out);
                    }
                }
            }
        }
        datasets
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    /// Investigative task performed by people (adjudication, assessment).
    Activity,
    /// Algorithm run (generation, triage, filtering).
    Operation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub id: Id,
    pub kind: RecordKind,
    pub plugin_name: String,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    pub input_dataset_ids: Vec<Id>,
    pub output_dataset_ids: Vec<Id>,
    pub status: RunStatus,
    pub started: Option<Timestamp>,
    pub finished: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ActivityRecord {
    pub fn new(id: Id, kind: RecordKind, plugin_name: impl Into<String>) -> Self {
        Self {
            id,
            kind,
            plugin_name: plugin_name.into(),
            params: BTreeMap::new(),
            input_dataset_ids: Vec::new(),
            output_dataset_ids: Vec::new(),
            status: RunStatus::Pending,
            started: None,
            finished: None,
            error: None,
        }
    }

    pub fn param(mut self, name: impl Into<String>, value: Value) -> Self {
        self.params.insert(name.into(), value);
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.status == RunStatus::Failed && self.error.as_deref().is_none_or(str::is_empty) {
            return Err(ModelError::MissingFailureReason(self.id));
        }
        Ok(())
    }
}
