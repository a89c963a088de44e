//! Operations over a knowledge base, as used by the service and the CLI.
//!
//! Every pipeline operation that produces a dataset is bracketed by an
//! [`ActivityRecord`]: the record is written as running before any output,
//! and rewritten as done (or failed, with the error) afterwards. When a
//! study is given, the finished activity is appended to its log.

use std::collections::{btree_map, BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{apply_filter, FilterOutcome, FilterSpec};
use crate::generator::{self, constitutional_features, fit_generator, generate_candidates, GeneratorError};
use crate::id::Id;
use crate::ingest::{parse_csv, CsvMapping};
use crate::kara::{
    self, allowed_pos_region, calibrate_scale, calibration_lp, candidate_pos_rollup, consensus_comparisons,
    reference_lok, Answer, AnswerSet, ConsensusOutcome, ConsistencyState, CorpusEntry, FinalPos, HornPlotConfig,
    Judgement, KaraError, LokRelation, LokScale, OverlayEntry, PairwiseComparison, PosAssessment, PosRegion, PosRollup,
    Question, RiskFactor, RollupMode, ScaleScope,
};
use crate::model::{
    ActivityRecord, AttributeValue, Characterization, Dataset, DomainObject, ModelError, Provenance, ProvenanceSource,
    RecordKind, RunStatus, Study, Value,
};
use crate::optim::OptimError;
use crate::store::evidence::{EvidenceItem, Verdict};
use crate::store::similarity::rank_similar;
use crate::store::{KbOptions, KnowledgeBase, StoreError, Stored};
use crate::triage::{
    self, acceptance_fraction, distribution_report, featurize, rank_candidates, train_triage_model, triage_reduce,
    AttributeReport, Example, FeatureSchema, FeatureVector, Label, LabelRow, SessionInfo, SessionMetrics, TrainConfig,
    TriageError, TriageModel,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Store(#[from] StoreError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Triage(#[from] TriageError),

    #[error(transparent)]
    Generator(#[from] GeneratorError),

    #[error(transparent)]
    Kara(#[from] KaraError),

    #[error(transparent)]
    Optim(#[from] OptimError),

    #[error("candidate {candidate} has no answers for risk factor {risk_factor}")]
    MissingAnswers { candidate: Id, risk_factor: Id },

    #[error("no {scope} scale calibrated for risk factor {risk_factor}")]
    NotCalibrated { risk_factor: Id, scope: String },

    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl Error {
    /// Stable machine-readable code, shared with the HTTP and CLI surfaces.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Store(e) => e.code(),
            Error::Model(e) => e.code(),
            Error::Triage(e) => e.code(),
            Error::Generator(e) => e.code(),
            Error::Kara(e) => e.code(),
            Error::Optim(e) => e.code(),
            Error::MissingAnswers { .. } => "missing-answers",
            Error::NotCalibrated { .. } => "not-calibrated",
            Error::InvalidRequest(_) => "invalid-request",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub const IMPORT_PLUGIN: &str = "csv-import";
pub const FILTER_PLUGIN: &str = "cutoff-filter";
pub const TRAIN_PLUGIN: &str = "triage-train";
pub const REDUCE_PLUGIN: &str = "triage-reduce";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    #[serde(default)]
    pub study: Option<Id>,
    pub seed_dataset: Id,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn default_max_len() -> usize {
    generator::DEFAULT_MAX_LEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateOutcome {
    pub dataset: Dataset,
    pub activity: Id,
    pub requested: usize,
    pub samples: usize,
    pub rejected_syntax: usize,
    pub rejected_duplicate: usize,
    pub rejected_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorAssessment {
    pub risk_factor: Id,
    pub name: String,
    pub final_pos: FinalPos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub candidate: Id,
    pub external_key: String,
    pub factors: Vec<FactorAssessment>,
    pub rollup: PosRollup,
}

pub struct Workbench {
    kb: KnowledgeBase,
    pub horn: HornPlotConfig,
}

impl Workbench {
    pub fn open(root: impl AsRef<Path>, options: KbOptions) -> Result<Self> {
        Ok(Self {
            kb: KnowledgeBase::open(root, options)?,
            horn: HornPlotConfig::default(),
        })
    }

    pub fn from_kb(kb: KnowledgeBase) -> Self {
        Self {
            kb,
            horn: HornPlotConfig::default(),
        }
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn kb_mut(&mut self) -> &mut KnowledgeBase {
        &mut self.kb
    }

    pub fn get<T: Stored>(&self, id: Id) -> Result<&T> {
        Ok(self.kb.get::<T>(id)?)
    }

    // ---- activities ------------------------------------------------------

    /// Runs `body` inside a running-then-done activity. `body` gets the
    /// activity id and returns the output datasets along with its result.
    fn run_activity<T>(
        &mut self,
        study: Option<Id>,
        kind: RecordKind,
        plugin: &str,
        params: BTreeMap<String, Value>,
        inputs: Vec<Id>,
        body: impl FnOnce(&mut Self, Id) -> Result<(Vec<Id>, T)>,
    ) -> Result<(ActivityRecord, T)> {
        if let Some(s) = study {
            self.kb.get::<Study>(s)?;
        }
        let mut record = ActivityRecord::new(self.kb.next_id(), kind, plugin);
        record.params = params;
        record.input_dataset_ids = inputs;
        record.status = RunStatus::Running;
        record.started = Some(self.kb.now());
        self.kb.put(record.clone())?;

        match body(self, record.id) {
            Ok((outputs, value)) => {
                record.output_dataset_ids = outputs;
                record.status = RunStatus::Done;
                record.finished = Some(self.kb.now());
                self.kb.put(record.clone())?;
                if let Some(s) = study {
                    let mut st = self.kb.get::<Study>(s)?.clone();
                    st.log_activity(&record);
                    self.kb.put(st)?;
                }
                Ok((record, value))
            }
            Err(e) => {
                record.status = RunStatus::Failed;
                record.finished = Some(self.kb.now());
                record.error = Some(format!("{}: {e}", e.code()));
                if let Err(log_err) = self.kb.put(record) {
                    log::error!("could not record failed activity: {log_err}");
                }
                Err(e)
            }
        }
    }

    // ---- studies and datasets ---------------------------------------------

    pub fn create_study(&mut self, goal: &str, participants: Vec<String>) -> Result<Study> {
        let study = Study::new(self.kb.next_id(), goal, participants)?;
        self.kb.put(study.clone())?;
        Ok(study)
    }

    /// Ingests CSV rows as objects plus characterizations and returns the
    /// root dataset holding them in row order. Rows whose key already names
    /// an object of the mapped kind reuse that object.
    pub fn import_csv(&mut self, study: Option<Id>, name: &str, csv: &str, mapping: &CsvMapping) -> Result<Dataset> {
        let rows = parse_csv(csv, mapping)?;
        let params = BTreeMap::from([
            ("kind".to_string(), Value::Text(mapping.kind.clone())),
            ("rows".to_string(), Value::Numeric(rows.len() as f64)),
        ]);
        let name = name.to_string();
        let (_, ds) = self.run_activity(study, RecordKind::Operation, IMPORT_PLUGIN, params, vec![], |wb, _| {
            let at = wb.kb.now();
            let mut objects = Vec::new();
            let mut chars = Vec::new();
            let mut fresh: BTreeMap<String, Id> = BTreeMap::new();
            for row in rows {
                let object_id = match wb.kb.object_by_key(&mapping.kind, &row.key) {
                    Some(o) => o.id,
                    None => match fresh.get(&row.key) {
                        Some(&id) => id,
                        None => {
                            let o = DomainObject::new(wb.kb.next_id(), &mapping.kind, &row.key)?;
                            fresh.insert(row.key.clone(), o.id);
                            let id = o.id;
                            objects.push(o);
                            id
                        }
                    },
                };
                let mut ch = Characterization::new(
                    wb.kb.next_id(),
                    object_id,
                    Provenance {
                        source: ProvenanceSource::Ingest,
                        at,
                    },
                );
                ch.attributes = row.attributes;
                chars.push(ch);
            }
            let members = chars.iter().map(|c| c.id).collect();
            let ds = Dataset::root(wb.kb.next_id(), name, members)?;
            wb.kb.put_many(objects)?;
            wb.kb.put_many(chars)?;
            wb.kb.put(ds.clone())?;
            Ok((vec![ds.id], ds))
        })?;
        Ok(ds)
    }

    pub fn filter_dataset(
        &mut self,
        study: Option<Id>,
        dataset: Id,
        spec: &FilterSpec,
        name: &str,
    ) -> Result<FilterOutcome> {
        let parent = self.kb.get::<Dataset>(dataset)?.clone();
        let spec_text = serde_json::to_string(spec).map_err(|e| StoreError::Serialization(e.to_string()))?;
        let params = BTreeMap::from([("spec".to_string(), Value::Text(spec_text))]);
        let name = name.to_string();
        let (_, outcome) = self.run_activity(
            study,
            RecordKind::Operation,
            FILTER_PLUGIN,
            params,
            vec![dataset],
            |wb, op| {
                let id = wb.kb.next_id();
                let outcome = apply_filter(&parent, |m| wb.kb.find::<Characterization>(*m), spec, op, id, name)?;
                wb.kb.put(outcome.dataset.clone())?;
                Ok((vec![outcome.dataset.id], outcome))
            },
        )?;
        Ok(outcome)
    }

    /// The object behind a characterization.
    pub fn object_of(&self, characterization: Id) -> Result<&DomainObject> {
        let ch = self.kb.get::<Characterization>(characterization)?;
        Ok(self.kb.get::<DomainObject>(ch.object_id)?)
    }

    /// External keys of a dataset's members, in member order.
    pub fn member_keys(&self, dataset: Id) -> Result<Vec<String>> {
        let ds = self.kb.get::<Dataset>(dataset)?;
        ds.member_ids
            .iter()
            .map(|&m| Ok(self.object_of(m)?.external_key.clone()))
            .collect()
    }

    // ---- generation ------------------------------------------------------

    /// Fits the Markov generator on the seed dataset's keys and stores `n`
    /// new candidates as a root dataset. Each candidate carries its
    /// constitutional descriptors as numeric attributes.
    pub fn generate(&mut self, req: &GenerateRequest) -> Result<GenerateOutcome> {
        let seed_ds = self.kb.get::<Dataset>(req.seed_dataset)?.clone();
        let mut kind = None;
        let mut seeds = Vec::with_capacity(seed_ds.len());
        for &m in &seed_ds.member_ids {
            let o = self.object_of(m)?;
            kind.get_or_insert_with(|| o.kind.clone());
            seeds.push(o.external_key.clone());
        }
        let kind = kind.ok_or(GeneratorError::TooFewSeeds {
            found: 0,
            required: generator::MIN_SEEDS,
        })?;
        let model = fit_generator(&seeds)?;
        let known: HashSet<String> = seeds.iter().cloned().collect();
        let params = BTreeMap::from([
            ("n".to_string(), Value::Numeric(req.n as f64)),
            ("seed".to_string(), Value::Text(req.seed.to_string())),
            ("max_len".to_string(), Value::Numeric(req.max_len as f64)),
            (
                "seed_fingerprint".to_string(),
                Value::Text(model.seed_fingerprint.clone()),
            ),
        ]);
        let (record, outcome) = self.run_activity(
            req.study,
            RecordKind::Operation,
            generator::PLUGIN_NAME,
            params,
            vec![req.seed_dataset],
            |wb, op| {
                let generation = generate_candidates(&model, req.n, req.seed, req.max_len, &known)?;
                let at = wb.kb.now();
                let mut objects = Vec::new();
                let mut chars = Vec::new();
                for key in &generation.candidates {
                    let object_id = match wb.kb.object_by_key(&kind, key) {
                        Some(o) => o.id,
                        None => {
                            let o = DomainObject::new(wb.kb.next_id(), &kind, key)?;
                            let id = o.id;
                            objects.push(o);
                            id
                        }
                    };
                    let mut ch = Characterization::new(
                        wb.kb.next_id(),
                        object_id,
                        Provenance {
                            source: ProvenanceSource::Operation(op),
                            at,
                        },
                    );
                    for (name, v) in constitutional_features(key) {
                        ch.attributes.insert(name, AttributeValue::numeric(v));
                    }
                    chars.push(ch);
                }
                let members = chars.iter().map(|c| c.id).collect();
                let ds = Dataset::root(wb.kb.next_id(), format!("generated-{}", req.seed), members)?;
                wb.kb.put_many(objects)?;
                wb.kb.put_many(chars)?;
                wb.kb.put(ds.clone())?;
                Ok((
                    vec![ds.id],
                    GenerateOutcome {
                        dataset: ds,
                        activity: op,
                        requested: req.n,
                        samples: generation.samples,
                        rejected_syntax: generation.rejected_syntax,
                        rejected_duplicate: generation.rejected_duplicate,
                        rejected_length: generation.rejected_length,
                        warning: generation.warning,
                    },
                ))
            },
        )?;
        debug_assert_eq!(record.id, outcome.activity);
        Ok(outcome)
    }

    // ---- adjudication ----------------------------------------------------

    pub fn open_session(
        &mut self,
        dataset: Id,
        question: Option<String>,
        choices: Option<Vec<String>>,
    ) -> Result<SessionInfo> {
        self.kb.get::<Dataset>(dataset)?;
        let info = SessionInfo::new(self.kb.next_id(), dataset, question, choices)?;
        self.kb.put(info.clone())?;
        Ok(info)
    }

    pub fn record_label(&mut self, session: Id, candidate: Id, expert: &str, choice: &str) -> Result<Label> {
        Ok(self
            .record_labels(
                session,
                &[LabelRow {
                    candidate_id: candidate,
                    expert_id: expert.to_string(),
                    choice: choice.to_string(),
                }],
            )?
            .remove(0))
    }

    /// Validates a whole batch against the session before storing any of
    /// it; later rows for the same (candidate, expert) win.
    pub fn record_labels(&mut self, session: Id, rows: &[LabelRow]) -> Result<Vec<Label>> {
        let mut s = self.kb.session(session)?;
        let members = self.kb.get::<Dataset>(s.info.dataset_id)?.member_set();
        let at = self.kb.now();
        let labels = rows
            .iter()
            .map(|r| s.record(&members, r.candidate_id, &r.expert_id, &r.choice, at))
            .collect::<Result<Vec<_>, _>>()?;
        self.kb.put_many(labels.clone())?;
        Ok(labels)
    }

    pub fn close_session(&mut self, session: Id) -> Result<SessionInfo> {
        let mut s = self.kb.session(session)?;
        s.close();
        self.kb.put(s.info.clone())?;
        Ok(s.info)
    }

    pub fn session_metrics(&self, session: Id) -> Result<SessionMetrics> {
        Ok(acceptance_fraction(&self.kb.session(session)?)?)
    }

    // ---- triage ----------------------------------------------------------

    pub fn features(&self, characterization: Id, schema: &FeatureSchema) -> Result<FeatureVector> {
        let ch = self.kb.get::<Characterization>(characterization)?;
        let o = self.kb.get::<DomainObject>(ch.object_id)?;
        Ok(featurize(o, ch, schema))
    }

    /// Trains on the labels of `sessions`. A candidate labeled several
    /// times gets the mean soft target. The numeric scaling is fitted on the
    /// labeled candidates.
    pub fn train_triage(
        &mut self,
        study: Option<Id>,
        sessions: &[Id],
        attributes: &[String],
        config: TrainConfig,
    ) -> Result<TriageModel> {
        let mut sums: BTreeMap<Id, (f64, usize)> = BTreeMap::new();
        let mut inputs = Vec::new();
        for &sid in sessions {
            let s = self.kb.session(sid)?;
            if !inputs.contains(&s.info.dataset_id) {
                inputs.push(s.info.dataset_id);
            }
            for l in &s.labels {
                if let Some(t) = s.info.target(&l.choice) {
                    let e = sums.entry(l.candidate).or_default();
                    e.0 += t;
                    e.1 += 1;
                }
            }
        }
        let labeled: Vec<&Characterization> = sums
            .keys()
            .map(|&c| self.kb.get::<Characterization>(c))
            .collect::<Result<_, _>>()?;
        let schema = FeatureSchema::fit(attributes, labeled.iter().copied());
        let examples = sums
            .iter()
            .map(|(&c, &(s, n))| {
                Ok(Example {
                    candidate: c,
                    features: self.features(c, &schema)?,
                    target: s / n as f64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = BTreeMap::from([
            ("sessions".to_string(), Value::Text(join_ids(sessions))),
            ("attributes".to_string(), Value::Text(attributes.join(","))),
        ]);
        let (_, model) = self.run_activity(study, RecordKind::Operation, TRAIN_PLUGIN, params, inputs, |wb, _| {
            let model = train_triage_model(wb.kb.next_id(), &schema, &examples, config)?;
            wb.kb.put(model.clone())?;
            Ok((vec![], model))
        })?;
        Ok(model)
    }

    pub fn rank(&self, model: Id, dataset: Id) -> Result<Vec<(Id, f64)>> {
        let model = self.kb.get::<TriageModel>(model)?;
        let ds = self.kb.get::<Dataset>(dataset)?;
        let candidates = ds
            .member_ids
            .iter()
            .map(|&m| Ok((m, self.features(m, &model.schema)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(rank_candidates(model, &candidates)?)
    }

    /// Ranks `dataset` with `model` and keeps the top fraction.
    pub fn reduce(
        &mut self,
        study: Option<Id>,
        model: Id,
        dataset: Id,
        keep_fraction: f64,
        name: &str,
    ) -> Result<Dataset> {
        triage::reduced_size(0, keep_fraction)?;
        let ranked = self.rank(model, dataset)?;
        let parent = self.kb.get::<Dataset>(dataset)?.clone();
        let fingerprint = self.kb.get::<TriageModel>(model)?.fingerprint.clone();
        let params = BTreeMap::from([
            ("keep_fraction".to_string(), Value::Numeric(keep_fraction)),
            ("model".to_string(), Value::Text(model.to_string())),
            ("model_fingerprint".to_string(), Value::Text(fingerprint)),
        ]);
        let name = name.to_string();
        let (_, ds) = self.run_activity(
            study,
            RecordKind::Operation,
            REDUCE_PLUGIN,
            params,
            vec![dataset],
            |wb, op| {
                let ds = triage_reduce(&parent, &ranked, keep_fraction, op, wb.kb.next_id(), name)?;
                wb.kb.put(ds.clone())?;
                Ok((vec![ds.id], ds))
            },
        )?;
        Ok(ds)
    }

    pub fn distribution_report(&self, a: Id, b: Id, attributes: &[String]) -> Result<Vec<AttributeReport>> {
        let values = |ds: Id, name: &str| -> Vec<f64> {
            self.kb
                .find::<Dataset>(ds)
                .map(|d| {
                    d.member_ids
                        .iter()
                        .filter_map(|m| self.kb.find::<Characterization>(*m)?.numeric(name))
                        .collect()
                })
                .unwrap_or_default()
        };
        self.kb.get::<Dataset>(a)?;
        self.kb.get::<Dataset>(b)?;
        Ok(distribution_report(attributes, |n| values(a, n), |n| values(b, n))?)
    }

    // ---- KaRA: characterization ------------------------------------------

    pub fn add_risk_factor(&mut self, name: &str, questions: Vec<Question>) -> Result<RiskFactor> {
        let factor = RiskFactor {
            id: self.kb.next_id(),
            name: name.to_string(),
            questions,
        };
        factor.validate()?;
        self.kb.put(factor.clone())?;
        Ok(factor)
    }

    pub fn submit_answers(
        &mut self,
        candidate: Id,
        risk_factor: Id,
        expert: &str,
        answers: BTreeMap<String, Answer>,
        evidence_ids: Vec<Id>,
        assessed_lok: Option<f64>,
    ) -> Result<AnswerSet> {
        for &e in &evidence_ids {
            self.kb.get::<EvidenceItem>(e)?;
        }
        let set = AnswerSet {
            id: AnswerSet::answer_set_id(candidate, risk_factor, expert),
            candidate,
            risk_factor,
            expert: expert.to_string(),
            answers,
            evidence_ids,
            assessed_lok,
        };
        let factor = self.kb.get::<RiskFactor>(risk_factor)?;
        kara::encode_answers(factor, &set)?;
        self.kb.put(set.clone())?;
        Ok(set)
    }

    pub fn add_evidence(&mut self, text: &str, source: &str) -> Result<EvidenceItem> {
        let item = EvidenceItem::new(self.kb.next_id(), text, source);
        self.kb.put(item.clone())?;
        Ok(item)
    }

    pub fn retrieve_evidence(&self, question: &str, k: usize) -> Result<Vec<(EvidenceItem, f64)>> {
        Ok(self.kb.retrieve_evidence(question, k)?)
    }

    /// Applies a curation verdict. A relevant verdict with `attach` set also
    /// attaches the item to that question of the risk factor.
    pub fn curate_evidence(
        &mut self,
        id: Id,
        question: &str,
        verdict: Verdict,
        attach: Option<(Id, String)>,
    ) -> Result<EvidenceItem> {
        let item = self.kb.curate_evidence(id, question, verdict)?;
        if let (Verdict::Relevant, Some((factor, qid))) = (verdict, attach) {
            let mut f = self.kb.get::<RiskFactor>(factor)?.clone();
            let q = f
                .questions
                .iter_mut()
                .find(|q| q.id == qid)
                .ok_or_else(|| Error::InvalidRequest(format!("risk factor {factor} has no question {qid}")))?;
            if !q.evidence_ids.contains(&id) {
                q.evidence_ids.push(id);
                self.kb.put(f)?;
            }
        }
        Ok(item)
    }

    // ---- KaRA: LOK -------------------------------------------------------

    pub fn comparisons(&self, risk_factor: Id, expert: Option<&str>) -> Vec<PairwiseComparison> {
        self.kb
            .list::<PairwiseComparison>()
            .filter(|c| c.risk_factor == risk_factor && expert.is_none_or(|e| c.expert == e))
            .cloned()
            .collect()
    }

    /// Records a comparison if it is consistent with the expert's earlier
    /// ones for this factor; otherwise returns the contradiction.
    pub fn add_comparison(
        &mut self,
        risk_factor: Id,
        expert: &str,
        a: Id,
        b: Id,
        relation: LokRelation,
    ) -> Result<PairwiseComparison> {
        if a == b {
            return Err(KaraError::InvalidComparison("a candidate cannot be compared with itself".into()).into());
        }
        if expert.trim().is_empty() {
            return Err(Error::InvalidRequest("expert id must not be empty".into()));
        }
        let prior: Vec<Judgement> = self
            .comparisons(risk_factor, Some(expert))
            .iter()
            .map(PairwiseComparison::judgement)
            .collect();
        let state = ConsistencyState::from_accepted(prior)?;
        state.check(Judgement::new(a, b, relation))?;
        let c = PairwiseComparison {
            id: self.kb.next_id(),
            risk_factor,
            expert: expert.to_string(),
            a,
            b,
            relation,
            at: self.kb.now(),
        };
        self.kb.put(c.clone())?;
        Ok(c)
    }

    pub fn consensus(&self, risk_factor: Id) -> Result<ConsensusOutcome> {
        self.kb.get::<RiskFactor>(risk_factor)?;
        let all: Vec<Judgement> = self
            .comparisons(risk_factor, None)
            .iter()
            .map(PairwiseComparison::judgement)
            .collect();
        Ok(consensus_comparisons(&all)?)
    }

    /// Reference LOK of each candidate from the assessed corpus of the
    /// factor (answer sets carrying an assessed LOK).
    pub fn reference_loks(&self, risk_factor: Id, candidates: &[Id]) -> Result<BTreeMap<Id, f64>> {
        let factor = self.kb.get::<RiskFactor>(risk_factor)?;
        let layout = factor.layout();
        let vectors = self.kb.answer_vectors(risk_factor)?;
        let mut corpus: BTreeMap<Id, CorpusEntry> = BTreeMap::new();
        for a in self.kb.list::<AnswerSet>() {
            if let (true, Some(lok)) = (a.risk_factor == risk_factor, a.assessed_lok) {
                if let btree_map::Entry::Vacant(slot) = corpus.entry(a.candidate) {
                    slot.insert(CorpusEntry {
                        candidate: a.candidate,
                        vector: kara::encode_answers(factor, a)?,
                        lok,
                    });
                }
            }
        }
        let corpus: Vec<CorpusEntry> = corpus.into_values().collect();
        candidates
            .iter()
            .map(|&c| {
                let v = vectors.get(&c).ok_or(Error::MissingAnswers {
                    candidate: c,
                    risk_factor,
                })?;
                Ok((c, reference_lok(&layout, &corpus, v, None)?))
            })
            .collect()
    }

    /// Inputs of a calibration: the scope's comparisons and the reference
    /// LOK of every candidate answered for the factor or compared.
    pub fn calibration_inputs(
        &self,
        risk_factor: Id,
        scope: &ScaleScope,
    ) -> Result<(BTreeMap<Id, f64>, Vec<Judgement>)> {
        let judgements = match scope {
            ScaleScope::Expert(e) => self
                .comparisons(risk_factor, Some(e))
                .iter()
                .map(PairwiseComparison::judgement)
                .collect(),
            ScaleScope::Global => {
                if self.comparisons(risk_factor, None).is_empty() {
                    Vec::new()
                } else {
                    self.consensus(risk_factor)?.selected
                }
            }
        };
        let mut candidates: Vec<Id> = self.kb.answer_vectors(risk_factor)?.keys().copied().collect();
        for j in &judgements {
            for c in [j.a, j.b] {
                if !candidates.contains(&c) {
                    candidates.push(c);
                }
            }
        }
        Ok((self.reference_loks(risk_factor, &candidates)?, judgements))
    }

    /// The calibration LP in text form, for troubleshooting.
    pub fn calibration_lp_text(&self, risk_factor: Id, scope: &ScaleScope, epsilon: f64) -> Result<String> {
        let (reference, judgements) = self.calibration_inputs(risk_factor, scope)?;
        let (lp, order) = calibration_lp(&reference, &judgements, epsilon);
        let names: Vec<String> = order
            .iter()
            .flat_map(|c| {
                let short = &c.to_string()[..8];
                [format!("x_{short}"), format!("d_{short}")]
            })
            .collect();
        Ok(lp.to_lp_text(
            &format!("lok calibration {} {}", risk_factor, scope.key()),
            Some(&names),
        ))
    }

    pub fn calibrate(&mut self, risk_factor: Id, scope: ScaleScope, epsilon: f64) -> Result<LokScale> {
        let (reference, judgements) = self.calibration_inputs(risk_factor, &scope)?;
        let cal = calibrate_scale(&reference, &judgements, epsilon)?;
        let scale = LokScale {
            id: LokScale::scale_id(risk_factor, &scope),
            risk_factor,
            scope,
            values: cal.values,
            reference,
            comparisons: judgements,
            epsilon,
            total_adjustment: cal.total_adjustment,
            created: self.kb.now(),
        };
        self.kb.put(scale.clone())?;
        Ok(scale)
    }

    fn scale_lok(&self, risk_factor: Id, scope: &ScaleScope, candidate: Id) -> Result<f64> {
        let scale = self.kb.scale(risk_factor, scope).ok_or_else(|| Error::NotCalibrated {
            risk_factor,
            scope: scope.key(),
        })?;
        Ok(scale.lok(candidate).ok_or(KaraError::UnknownCandidate(candidate))?)
    }

    // ---- KaRA: POS -------------------------------------------------------

    pub fn region(&self, lok: f64) -> Result<PosRegion> {
        Ok(allowed_pos_region(lok, &self.horn)?)
    }

    /// Validates a POS against the expert's own scale and stores it either
    /// way; out-of-region submissions are kept with `valid = false`.
    pub fn submit_pos(&mut self, risk_factor: Id, expert: &str, candidate: Id, pos: f64) -> Result<PosAssessment> {
        let lok = self.scale_lok(risk_factor, &ScaleScope::Expert(expert.to_string()), candidate)?;
        let a = kara::submit_pos(
            expert,
            candidate,
            risk_factor,
            pos,
            Some(lok),
            &self.horn,
            self.kb.now(),
        )?;
        self.kb.put(a.clone())?;
        Ok(a)
    }

    pub fn pos_assessments(&self, risk_factor: Id, candidate: Id) -> Vec<PosAssessment> {
        self.kb
            .list::<PosAssessment>()
            .filter(|a| a.risk_factor == risk_factor && a.candidate == candidate)
            .cloned()
            .collect()
    }

    pub fn consensus_pos(&mut self, risk_factor: Id, candidate: Id) -> Result<FinalPos> {
        let lok = self.scale_lok(risk_factor, &ScaleScope::Global, candidate)?;
        let f = kara::consensus_pos(&self.pos_assessments(risk_factor, candidate), lok, &self.horn)?;
        self.kb.put(f.clone())?;
        Ok(f)
    }

    /// The `k` assessed candidates (those with a final POS for the factor)
    /// most similar to `candidate`, excluding itself.
    pub fn overlay(&self, risk_factor: Id, candidate: Id, k: usize) -> Result<Vec<OverlayEntry>> {
        let layout = self.kb.get::<RiskFactor>(risk_factor)?.layout();
        let vectors = self.kb.answer_vectors(risk_factor)?;
        let target = vectors
            .get(&candidate)
            .ok_or(Error::MissingAnswers { candidate, risk_factor })?;
        let finals: BTreeMap<Id, &FinalPos> = self
            .kb
            .list::<FinalPos>()
            .filter(|f| f.risk_factor == risk_factor)
            .map(|f| (f.candidate, f))
            .collect();
        let corpus = vectors
            .iter()
            .filter(|(c, _)| finals.contains_key(c))
            .map(|(&c, v)| (c, v));
        Ok(rank_similar(&layout, corpus, target, k, Some(candidate))?
            .into_iter()
            .map(|(c, similarity)| OverlayEntry {
                candidate: c,
                similarity,
                pos: finals[&c].final_pos,
                lok: finals[&c].global_lok,
            })
            .collect())
    }

    pub fn report(&self, candidate: Id, mode: RollupMode) -> Result<CandidateReport> {
        let external_key = self.object_of(candidate)?.external_key.clone();
        let mut factors = Vec::new();
        for f in self.kb.list::<FinalPos>().filter(|f| f.candidate == candidate) {
            let name = self.kb.get::<RiskFactor>(f.risk_factor)?.name.clone();
            factors.push(FactorAssessment {
                risk_factor: f.risk_factor,
                name,
                final_pos: f.clone(),
            });
        }
        let by_name: BTreeMap<String, f64> = factors
            .iter()
            .map(|f| (f.name.clone(), f.final_pos.final_pos))
            .collect();
        Ok(CandidateReport {
            candidate,
            external_key,
            rollup: candidate_pos_rollup(&by_name, mode)?,
            factors,
        })
    }

    /// Every final POS as `candidate_id,risk_factor,global_lok,final_pos,n_experts,projected`.
    pub fn assessments_csv(&self) -> String {
        let mut out = String::from("candidate_id,risk_factor,global_lok,final_pos,n_experts,projected\n");
        for f in self.kb.list::<FinalPos>() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                f.candidate, f.risk_factor, f.global_lok, f.final_pos, f.n_experts, f.projected
            ));
        }
        out
    }
}

fn join_ids(ids: &[Id]) -> String {
    ids.iter().map(Id::to_string).collect::<Vec<_>>().join(",")
}
