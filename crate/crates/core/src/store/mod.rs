//! File-backed knowledge base.
//!
//! Every record family lives in its own append-only JSON-lines log under the
//! root directory (see [`table`] for the line format). The whole store is
//! loaded into memory on open; writes append, sync, and then update the
//! in-memory view, so a successful `put` is durable. Reference checks run
//! before every write and can be re-run over the full store with
//! [`KnowledgeBase::check_references`].

pub mod evidence;
pub mod similarity;
mod table;

use std::collections::{btree_map, BTreeMap, HashMap, HashSet, VecDeque};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::id::{Clock, Id, IdGen, Timestamp};
use crate::kara::{
    encode_answers, AnswerSet, FinalPos, LokScale, PairwiseComparison, PosAssessment, RiskFactor, ScaleScope,
};
use crate::model::{
    ActivityRecord, Characterization, Dataset, DomainObject, ModelError, ProvenanceSource, RunStatus, Study,
};
use crate::triage::{AdjudicationSession, Label, SessionInfo, TriageModel};
use evidence::{rank_evidence, EvidenceItem, Verdict, MAX_TERM_WEIGHT, MIN_TERM_WEIGHT};
use similarity::{rank_similar, CharVector};
pub use table::{Record, Table};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("{table}.jsonl line {line}: {reason}")]
    CorruptStore { table: String, line: usize, reason: String },

    #[error("no {table} record with id {id}")]
    UnknownId { table: String, id: Id },

    #[error("i/o: {0}")]
    Io(String),

    #[error("serialization: {0}")]
    Serialization(String),

    #[error("vector dimension {found} does not match the questionnaire encoding ({expected})")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no stored candidates to compare with")]
    EmptyCorpus,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{kind} with key {key:?} already exists as {existing}")]
    DuplicateKey { kind: String, key: String, existing: Id },

    #[error("dangling reference: {0}")]
    DanglingReference(String),

    #[error("lineage of dataset {0} is cyclic")]
    CyclicLineage(Id),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error(transparent)]
    Model(#[from] ModelError),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::CorruptStore { .. } => "corrupt-store",
            StoreError::UnknownId { .. } => "unknown-id",
            StoreError::Io(_) => "io",
            StoreError::Serialization(_) => "serialization",
            StoreError::DimensionMismatch { .. } => "dimension-mismatch",
            StoreError::EmptyCorpus => "empty-corpus",
            StoreError::InvalidArgument(_) => "invalid-argument",
            StoreError::DuplicateKey { .. } => "duplicate-key",
            StoreError::DanglingReference(_) => "dangling-reference",
            StoreError::CyclicLineage(_) => "cyclic-lineage",
            StoreError::InvalidRecord(_) => "invalid-record",
            StoreError::Model(e) => e.code(),
        }
    }
}

/// A record family held by the knowledge base.
pub trait Stored: Record {
    fn table(kb: &KnowledgeBase) -> &Table<Self>;
    fn table_mut(kb: &mut KnowledgeBase) -> &mut Table<Self>;
    /// Type invariants and references that must resolve in `kb`.
    fn check(&self, kb: &KnowledgeBase) -> Result<(), StoreError>;
    /// Secondary key that must be unique within the family.
    fn unique_key(&self) -> Option<(String, String)> {
        None
    }
}

macro_rules! stored {
    ($ty:ty, $field:ident, $name:literal, $check:path $(, key = $key:path)?) => {
        impl Record for $ty {
            const TABLE: &'static str = $name;
            fn record_id(&self) -> Id {
                self.id
            }
        }

        impl Stored for $ty {
            fn table(kb: &KnowledgeBase) -> &Table<Self> {
                &kb.$field
            }
            fn table_mut(kb: &mut KnowledgeBase) -> &mut Table<Self> {
                &mut kb.$field
            }
            fn check(&self, kb: &KnowledgeBase) -> Result<(), StoreError> {
                $check(self, kb)
            }
            $(
                fn unique_key(&self) -> Option<(String, String)> {
                    $key(self)
                }
            )?
        }
    };
}

stored!(DomainObject, objects, "objects", check_object, key = object_key);

fn object_key(o: &DomainObject) -> Option<(String, String)> {
    Some((o.kind.clone(), o.external_key.clone()))
}
stored!(
    Characterization,
    characterizations,
    "characterizations",
    check_characterization
);
stored!(Dataset, datasets, "datasets", check_dataset);
stored!(Study, studies, "studies", check_study);
stored!(ActivityRecord, activities, "activities", check_activity);
stored!(PairwiseComparison, comparisons, "comparisons", check_comparison);
stored!(PosAssessment, assessments, "assessments", check_assessment);
stored!(EvidenceItem, evidence, "evidence", check_evidence);
stored!(SessionInfo, sessions, "sessions", check_session);
stored!(Label, labels, "labels", check_label);
stored!(TriageModel, models, "models", check_model);
stored!(RiskFactor, risk_factors, "risk_factors", check_risk_factor);
stored!(AnswerSet, answers, "answers", check_answers);
stored!(LokScale, scales, "scales", check_scale);
stored!(FinalPos, final_pos, "final_pos", check_final_pos);

fn dangling(what: impl std::fmt::Display) -> StoreError {
    StoreError::DanglingReference(what.to_string())
}

fn need<T: Stored>(kb: &KnowledgeBase, id: Id, from: &str) -> Result<(), StoreError> {
    if T::table(kb).contains(&id) {
        Ok(())
    } else {
        Err(dangling(format!("{from} refers to unknown {} {id}", T::TABLE)))
    }
}

fn check_object(o: &DomainObject, kb: &KnowledgeBase) -> Result<(), StoreError> {
    if o.external_key.is_empty() {
        return Err(ModelError::EmptyKey.into());
    }
    match kb.key_index.get(&(o.kind.clone(), o.external_key.clone())) {
        Some(&existing) if existing != o.id => Err(StoreError::DuplicateKey {
            kind: o.kind.clone(),
            key: o.external_key.clone(),
            existing,
        }),
        _ => Ok(()),
    }
}

fn check_provenance(source: ProvenanceSource, kb: &KnowledgeBase, from: &str) -> Result<(), StoreError> {
    match source {
        ProvenanceSource::Ingest => Ok(()),
        ProvenanceSource::Operation(id) | ProvenanceSource::Activity(id) => need::<ActivityRecord>(kb, id, from),
    }
}

fn check_characterization(c: &Characterization, kb: &KnowledgeBase) -> Result<(), StoreError> {
    let from = format!("characterization {}", c.id);
    need::<DomainObject>(kb, c.object_id, &from)?;
    check_provenance(c.provenance.source, kb, &from)?;
    for (name, a) in &c.attributes {
        if a.value.as_f64().is_some_and(|v| !v.is_finite()) {
            return Err(ModelError::InvalidAttribute {
                name: name.clone(),
                reason: "numeric value must be finite".into(),
            }
            .into());
        }
    }
    Ok(())
}

fn check_dataset(d: &Dataset, kb: &KnowledgeBase) -> Result<(), StoreError> {
    d.check_unique_members()?;
    let from = format!("dataset {}", d.id);
    for &m in &d.member_ids {
        need::<Characterization>(kb, m, &from)?;
    }
    for l in &d.lineage {
        if l.parent == d.id {
            return Err(StoreError::CyclicLineage(d.id));
        }
        need::<Dataset>(kb, l.parent, &from)?;
        need::<ActivityRecord>(kb, l.operation, &from)?;
        if kb.ancestors(l.parent)?.contains(&d.id) {
            return Err(StoreError::CyclicLineage(d.id));
        }
    }
    Ok(())
}

fn check_study(s: &Study, kb: &KnowledgeBase) -> Result<(), StoreError> {
    if s.goal.trim().is_empty() {
        return Err(ModelError::EmptyGoal.into());
    }
    let from = format!("study {}", s.id);
    for &d in &s.dataset_ids {
        need::<Dataset>(kb, d, &from)?;
    }
    for &a in &s.activity_log {
        need::<ActivityRecord>(kb, a, &from)?;
    }
    Ok(())
}

fn check_activity(a: &ActivityRecord, kb: &KnowledgeBase) -> Result<(), StoreError> {
    a.validate()?;
    let from = format!("activity {}", a.id);
    for &d in &a.input_dataset_ids {
        need::<Dataset>(kb, d, &from)?;
    }
    if a.status == RunStatus::Done {
        for &d in &a.output_dataset_ids {
            need::<Dataset>(kb, d, &from)?;
        }
    }
    Ok(())
}

fn check_comparison(c: &PairwiseComparison, kb: &KnowledgeBase) -> Result<(), StoreError> {
    if c.a == c.b {
        return Err(StoreError::InvalidRecord(
            "comparison of a candidate with itself".into(),
        ));
    }
    let from = format!("comparison {}", c.id);
    need::<RiskFactor>(kb, c.risk_factor, &from)?;
    need::<Characterization>(kb, c.a, &from)?;
    need::<Characterization>(kb, c.b, &from)
}

fn check_assessment(p: &PosAssessment, kb: &KnowledgeBase) -> Result<(), StoreError> {
    if !(0.0..=1.0).contains(&p.pos) || !(0.0..=1.0).contains(&p.lok_used) {
        return Err(StoreError::InvalidRecord(format!("assessment {} outside [0, 1]", p.id)));
    }
    let from = format!("assessment {}", p.id);
    need::<RiskFactor>(kb, p.risk_factor, &from)?;
    need::<Characterization>(kb, p.candidate, &from)
}

fn check_evidence(e: &EvidenceItem, _: &KnowledgeBase) -> Result<(), StoreError> {
    if let Some((t, w)) = e
        .term_weights
        .iter()
        .find(|(_, w)| !(MIN_TERM_WEIGHT..=MAX_TERM_WEIGHT).contains(*w))
    {
        return Err(StoreError::InvalidRecord(format!(
            "term weight {w} for {t:?} out of range"
        )));
    }
    Ok(())
}

fn check_session(s: &SessionInfo, kb: &KnowledgeBase) -> Result<(), StoreError> {
    if s.choices.len() < 2 {
        return Err(StoreError::InvalidRecord("session needs at least two choices".into()));
    }
    need::<Dataset>(kb, s.dataset_id, &format!("session {}", s.id))
}

fn check_label(l: &Label, kb: &KnowledgeBase) -> Result<(), StoreError> {
    let from = format!("label {}", l.id);
    let session = kb.get::<SessionInfo>(l.session_id).map_err(|_| dangling(&from))?;
    if session.choice_index(&l.choice).is_none() {
        return Err(StoreError::InvalidRecord(format!(
            "{from}: unknown choice {:?}",
            l.choice
        )));
    }
    let ds = kb.get::<Dataset>(session.dataset_id)?;
    if !ds.member_ids.contains(&l.candidate) {
        return Err(dangling(format!("{from}: candidate {} not in dataset", l.candidate)));
    }
    Ok(())
}

fn check_model(m: &TriageModel, _: &KnowledgeBase) -> Result<(), StoreError> {
    if m.weights.iter().chain([&m.bias]).any(|w| !w.is_finite()) {
        return Err(StoreError::InvalidRecord(format!(
            "model {} has non-finite weights",
            m.id
        )));
    }
    if m.weights.len() != m.schema.dim() {
        return Err(StoreError::InvalidRecord(format!(
            "model {} weight count mismatch",
            m.id
        )));
    }
    Ok(())
}

fn check_risk_factor(f: &RiskFactor, _: &KnowledgeBase) -> Result<(), StoreError> {
    f.validate().map_err(|e| StoreError::InvalidRecord(e.to_string()))
}

fn check_answers(a: &AnswerSet, kb: &KnowledgeBase) -> Result<(), StoreError> {
    let from = format!("answer set {}", a.id);
    need::<Characterization>(kb, a.candidate, &from)?;
    let factor = kb.get::<RiskFactor>(a.risk_factor).map_err(|_| dangling(&from))?;
    encode_answers(factor, a).map_err(|e| StoreError::InvalidRecord(format!("{from}: {e}")))?;
    if a.assessed_lok.is_some_and(|l| !(0.0..=1.0).contains(&l)) {
        return Err(StoreError::InvalidRecord(format!(
            "{from}: assessed LOK outside [0, 1]"
        )));
    }
    Ok(())
}

fn check_scale(s: &LokScale, kb: &KnowledgeBase) -> Result<(), StoreError> {
    let from = format!("scale {}", s.id);
    need::<RiskFactor>(kb, s.risk_factor, &from)?;
    for &c in s.values.keys() {
        need::<Characterization>(kb, c, &from)?;
    }
    Ok(())
}

fn check_final_pos(f: &FinalPos, kb: &KnowledgeBase) -> Result<(), StoreError> {
    let from = format!("final POS {}", f.id);
    need::<RiskFactor>(kb, f.risk_factor, &from)?;
    need::<Characterization>(kb, f.candidate, &from)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KbOptions {
    /// Seeds identifier generation (mixed with the store size on open).
    /// `None` draws from system entropy.
    pub seed: Option<u64>,
    pub clock: Clock,
}

pub struct KnowledgeBase {
    root: PathBuf,
    ids: IdGen,
    clock: Clock,
    objects: Table<DomainObject>,
    characterizations: Table<Characterization>,
    datasets: Table<Dataset>,
    studies: Table<Study>,
    activities: Table<ActivityRecord>,
    comparisons: Table<PairwiseComparison>,
    assessments: Table<PosAssessment>,
    evidence: Table<EvidenceItem>,
    sessions: Table<SessionInfo>,
    labels: Table<Label>,
    models: Table<TriageModel>,
    risk_factors: Table<RiskFactor>,
    answers: Table<AnswerSet>,
    scales: Table<LokScale>,
    final_pos: Table<FinalPos>,
    key_index: HashMap<(String, String), Id>,
}

impl KnowledgeBase {
    pub fn open(root: impl AsRef<Path>, options: KbOptions) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root).map_err(|e| StoreError::Io(format!("{}: {e}", root.display())))?;
        let mut kb = Self {
            ids: IdGen::seeded(0),
            clock: options.clock,
            objects: Table::open(&root)?,
            characterizations: Table::open(&root)?,
            datasets: Table::open(&root)?,
            studies: Table::open(&root)?,
            activities: Table::open(&root)?,
            comparisons: Table::open(&root)?,
            assessments: Table::open(&root)?,
            evidence: Table::open(&root)?,
            sessions: Table::open(&root)?,
            labels: Table::open(&root)?,
            models: Table::open(&root)?,
            risk_factors: Table::open(&root)?,
            answers: Table::open(&root)?,
            scales: Table::open(&root)?,
            final_pos: Table::open(&root)?,
            key_index: HashMap::new(),
            root,
        };
        for o in kb.objects.iter() {
            kb.key_index.insert((o.kind.clone(), o.external_key.clone()), o.id);
        }
        kb.ids = match options.seed {
            Some(seed) => IdGen::seeded(seed ^ kb.total_lines().wrapping_mul(0x9e37_79b9_7f4a_7c15)),
            None => IdGen::from_entropy(),
        };
        Ok(kb)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn next_id(&mut self) -> Id {
        self.ids.next_id()
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn total_lines(&self) -> u64 {
        [
            self.objects.line_count(),
            self.characterizations.line_count(),
            self.datasets.line_count(),
            self.studies.line_count(),
            self.activities.line_count(),
            self.comparisons.line_count(),
            self.assessments.line_count(),
            self.evidence.line_count(),
            self.sessions.line_count(),
            self.labels.line_count(),
            self.models.line_count(),
            self.risk_factors.line_count(),
            self.answers.line_count(),
            self.scales.line_count(),
            self.final_pos.line_count(),
        ]
        .iter()
        .sum()
    }

    pub fn put<T: Stored>(&mut self, record: T) -> Result<(), StoreError> {
        self.put_many(vec![record])
    }

    /// Checks every record, then appends them all with one sync.
    pub fn put_many<T: Stored>(&mut self, records: Vec<T>) -> Result<(), StoreError> {
        for r in &records {
            r.check(self)?;
        }
        self.index_keys(&records)?;
        T::table_mut(self).append(records)
    }

    /// Tracks secondary-key uniqueness, including within a batch.
    fn index_keys<T: Stored>(&mut self, records: &[T]) -> Result<(), StoreError> {
        let mut fresh: HashMap<(String, String), Id> = HashMap::new();
        for r in records {
            let Some(key) = r.unique_key() else { continue };
            if let Some(&existing) = fresh.get(&key) {
                if existing != r.record_id() {
                    return Err(StoreError::DuplicateKey {
                        kind: key.0,
                        key: key.1,
                        existing,
                    });
                }
            }
            fresh.insert(key, r.record_id());
        }
        self.key_index.extend(fresh);
        Ok(())
    }

    pub fn get<T: Stored>(&self, id: Id) -> Result<&T, StoreError> {
        T::table(self).get(&id).ok_or_else(|| StoreError::UnknownId {
            table: T::TABLE.to_string(),
            id,
        })
    }

    pub fn find<T: Stored>(&self, id: Id) -> Option<&T> {
        T::table(self).get(&id)
    }

    pub fn contains<T: Stored>(&self, id: Id) -> bool {
        T::table(self).contains(&id)
    }

    /// All records of a family in first-insertion order.
    pub fn list<T: Stored>(&self) -> impl Iterator<Item = &T> + '_ {
        T::table(self).iter()
    }

    pub fn count<T: Stored>(&self) -> usize {
        T::table(self).len()
    }

    pub fn object_by_key(&self, kind: &str, key: &str) -> Option<&DomainObject> {
        let id = self.key_index.get(&(kind.to_string(), key.to_string()))?;
        self.objects.get(id)
    }

    /// Lineage ancestors of `dataset`, nearest first.
    pub fn ancestors(&self, dataset: Id) -> Result<Vec<Id>, StoreError> {
        let mut out = Vec::new();
        let mut seen = HashSet::from([dataset]);
        let mut queue = VecDeque::from([dataset]);
        while let Some(d) = queue.pop_front() {
            let ds = self.get::<Dataset>(d)?;
            for l in &ds.lineage {
                if l.parent == dataset {
                    return Err(StoreError::CyclicLineage(dataset));
                }
                if seen.insert(l.parent) {
                    out.push(l.parent);
                    queue.push_back(l.parent);
                }
            }
        }
        Ok(out)
    }

    /// Re-runs every record's checks against the loaded state.
    pub fn check_references(&self) -> Result<(), StoreError> {
        fn all<T: Stored>(kb: &KnowledgeBase, problems: &mut Vec<String>) {
            for r in kb.list::<T>() {
                if let Err(e) = r.check(kb) {
                    problems.push(format!("{} {}: {e}", T::TABLE, r.record_id()));
                }
            }
        }
        let mut problems = Vec::new();
        all::<DomainObject>(self, &mut problems);
        all::<ActivityRecord>(self, &mut problems);
        all::<Characterization>(self, &mut problems);
        all::<Dataset>(self, &mut problems);
        all::<Study>(self, &mut problems);
        all::<SessionInfo>(self, &mut problems);
        all::<Label>(self, &mut problems);
        all::<TriageModel>(self, &mut problems);
        all::<EvidenceItem>(self, &mut problems);
        all::<RiskFactor>(self, &mut problems);
        all::<AnswerSet>(self, &mut problems);
        all::<PairwiseComparison>(self, &mut problems);
        all::<PosAssessment>(self, &mut problems);
        all::<LokScale>(self, &mut problems);
        all::<FinalPos>(self, &mut problems);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(StoreError::DanglingReference(problems.join("; ")))
        }
    }

    /// The header and all labels of a session.
    pub fn session(&self, id: Id) -> Result<AdjudicationSession, StoreError> {
        let info = self.get::<SessionInfo>(id)?.clone();
        let labels = self.labels.iter().filter(|l| l.session_id == id).cloned().collect();
        Ok(AdjudicationSession { info, labels })
    }

    /// Encoded characterization vector per candidate for a risk factor. A
    /// candidate is represented by the first answer set recorded for it.
    pub fn answer_vectors(&self, risk_factor: Id) -> Result<BTreeMap<Id, CharVector>, StoreError> {
        let factor = self.get::<RiskFactor>(risk_factor)?;
        let mut out = BTreeMap::new();
        for a in self.answers.iter().filter(|a| a.risk_factor == risk_factor) {
            if let btree_map::Entry::Vacant(slot) = out.entry(a.candidate) {
                slot.insert(encode_answers(factor, a).map_err(|e| StoreError::InvalidRecord(e.to_string()))?);
            }
        }
        Ok(out)
    }

    /// The `k` stored candidates most similar to `target` under the factor's
    /// questionnaire encoding.
    pub fn similar_candidates(
        &self,
        risk_factor: Id,
        target: &[Option<f64>],
        k: usize,
        exclude: Option<Id>,
    ) -> Result<Vec<(Id, f64)>, StoreError> {
        let layout = self.get::<RiskFactor>(risk_factor)?.layout();
        let vectors = self.answer_vectors(risk_factor)?;
        rank_similar(&layout, vectors.iter().map(|(&id, v)| (id, v)), target, k, exclude)
    }

    pub fn retrieve_evidence(&self, question: &str, k: usize) -> Result<Vec<(EvidenceItem, f64)>, StoreError> {
        if question.trim().is_empty() {
            return Err(StoreError::InvalidArgument("question must not be empty".into()));
        }
        Ok(rank_evidence(self.evidence.iter(), question, k)
            .into_iter()
            .map(|(e, s)| (e.clone(), s))
            .collect())
    }

    pub fn curate_evidence(&mut self, id: Id, question: &str, verdict: Verdict) -> Result<EvidenceItem, StoreError> {
        let mut item = self.get::<EvidenceItem>(id)?.clone();
        item.curate(question, verdict);
        self.put(item.clone())?;
        Ok(item)
    }

    /// The scale for `risk_factor` and `scope`, if calibrated.
    pub fn scale(&self, risk_factor: Id, scope: &ScaleScope) -> Option<&LokScale> {
        self.scales.get(&LokScale::scale_id(risk_factor, scope))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AttributeValue, Provenance};

    fn kb(dir: &Path) -> KnowledgeBase {
        KnowledgeBase::open(
            dir,
            KbOptions {
                seed: Some(1),
                clock: Clock::Fixed(Timestamp::from_unix(0)),
            },
        )
        .unwrap()
    }

    fn ingest(kb: &mut KnowledgeBase, key: &str) -> Characterization {
        let o = DomainObject::new(kb.next_id(), "molecule-cation", key).unwrap();
        let c = Characterization::new(
            kb.next_id(),
            o.id,
            Provenance {
                source: ProvenanceSource::Ingest,
                at: kb.now(),
            },
        )
        .with("lambda_max", AttributeValue::numeric(250.0));
        kb.put(o).unwrap();
        kb.put(c.clone()).unwrap();
        c
    }

    #[test]
    fn roundtrip_and_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let mut k = kb(dir.path());
        let c = ingest(&mut k, "CCO");
        assert_eq!(k.get::<Characterization>(c.id).unwrap(), &c);
        let missing = Id::from_u128(42);
        assert!(matches!(
            k.get::<Characterization>(missing),
            Err(StoreError::UnknownId { .. })
        ));
        drop(k);
        assert_eq!(kb(dir.path()).get::<Characterization>(c.id).unwrap(), &c);
    }

    #[test]
    fn references_are_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let mut k = kb(dir.path());
        let orphan = Characterization::new(
            Id::from_u128(1),
            Id::from_u128(2),
            Provenance {
                source: ProvenanceSource::Ingest,
                at: Timestamp::from_unix(0),
            },
        );
        assert!(matches!(k.put(orphan), Err(StoreError::DanglingReference(_))));
        let c = ingest(&mut k, "CCO");
        let dup = DomainObject::new(Id::from_u128(7), "molecule-cation", "CCO").unwrap();
        assert!(matches!(k.put(dup), Err(StoreError::DuplicateKey { .. })));
        let ds = Dataset::root(Id::from_u128(3), "d", vec![c.id, Id::from_u128(99)]).unwrap();
        assert!(matches!(k.put(ds), Err(StoreError::DanglingReference(_))));
        k.check_references().unwrap();
    }

    #[test]
    fn ids_are_deterministic_per_state() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (mut ka, mut kb2) = (kb(a.path()), kb(b.path()));
        assert_eq!(ka.next_id(), kb2.next_id());
        ingest(&mut ka, "CC");
        ingest(&mut kb2, "CC");
        drop((ka, kb2));
        assert_eq!(kb(a.path()).next_id(), kb(b.path()).next_id());
    }

    #[test]
    fn list_preserves_insertion_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut k = kb(dir.path());
        let keys: Vec<String> = (0..50).map(|i| format!("C{}", "C".repeat(i))).collect();
        let ids: Vec<Id> = keys.iter().map(|key| ingest(&mut k, key).id).collect();
        drop(k);
        let listed: Vec<Id> = kb(dir.path()).list::<Characterization>().map(|c| c.id).collect();
        assert_eq!(listed, ids);
    }
}
