use std::collections::BTreeMap;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use workbench_core::filter::{FilterOutcome, FilterSpec};
use workbench_core::id::Id;
use workbench_core::ingest::CsvMapping;
use workbench_core::kara::{
    Answer, AnswerSet, ConsensusOutcome, FinalPos, LokRelation, LokScale, OverlayEntry, PairwiseComparison,
    PosAssessment, PosRegion, Question, RiskFactor, RollupMode, ScaleScope, DEFAULT_EPSILON,
};
use workbench_core::model::{AttributeValue, Characterization, Dataset, Study};
use workbench_core::store::evidence::{EvidenceItem, Verdict};
use workbench_core::triage::{FeatureSchema, Label, LabelRow, SessionInfo, SessionMetrics, TrainConfig, TriageModel};
use workbench_core::workbench::{CandidateReport, GenerateOutcome, GenerateRequest, Workbench};

use crate::error::Failure;
use crate::{with_workbench, Shared};

type Reply<T> = Result<Json<T>, Failure>;
type Created<T> = Result<(StatusCode, Json<T>), Failure>;

fn body<T>(b: Result<Json<T>, JsonRejection>) -> Result<T, Failure> {
    b.map(|Json(v)| v).map_err(|r| Failure::bad_request(r.body_text()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, Failure> {
    q.map(|Query(v)| v).map_err(|r| Failure::bad_request(r.body_text()))
}

fn path<T>(p: Result<Path<T>, PathRejection>) -> Result<T, Failure> {
    p.map(|Path(v)| v).map_err(|r| Failure::bad_request(r.body_text()))
}

fn created<T>(v: T) -> (StatusCode, Json<T>) {
    (StatusCode::CREATED, Json(v))
}

pub fn routes(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/studies", post(create_study).get(list_studies))
        .route("/studies/{id}", get(get_study))
        .route("/datasets/import", post(import_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/filter", post(filter_dataset))
        .route("/generate", post(generate))
        .route("/adjudication/sessions", post(open_session))
        .route("/adjudication/sessions/{id}", get(get_session))
        .route("/adjudication/sessions/{id}/labels", post(record_labels))
        .route("/adjudication/sessions/{id}/close", post(close_session))
        .route("/adjudication/sessions/{id}/metrics", get(session_metrics))
        .route("/triage/train", post(train))
        .route("/triage/rank", post(rank))
        .route("/triage/reduce", post(reduce))
        .route("/kara/risk-factors", post(add_risk_factor).get(list_risk_factors))
        .route("/kara/answers", post(submit_answers))
        .route("/kara/evidence", get(retrieve_evidence).post(add_evidence))
        .route("/kara/evidence/{id}/curate", post(curate_evidence))
        .route("/kara/comparisons", post(add_comparison).get(list_comparisons))
        .route("/kara/calibrate", post(calibrate))
        .route("/kara/consensus-comparisons", post(consensus_comparisons))
        .route("/kara/region", get(region))
        .route("/kara/pos", post(submit_pos))
        .route("/kara/overlay", get(overlay))
        .route("/kara/consensus-pos", post(consensus_pos))
        .route("/kara/report/{candidate}", get(report))
        .fallback(|| async { Failure::not_found("no such endpoint") })
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

// ---- studies ----------------------------------------------------------------

#[derive(Deserialize)]
struct CreateStudy {
    goal: String,
    #[serde(default)]
    participants: Vec<String>,
}

async fn create_study(State(s): State<Shared>, b: Result<Json<CreateStudy>, JsonRejection>) -> Created<Study> {
    let req = body(b)?;
    let study = with_workbench(&s, move |wb| Ok(wb.create_study(&req.goal, req.participants)?)).await?;
    Ok(created(study))
}

async fn list_studies(State(s): State<Shared>) -> Reply<Vec<Study>> {
    with_workbench(&s, |wb| Ok(wb.kb().list::<Study>().cloned().collect()))
        .await
        .map(Json)
}

async fn get_study(State(s): State<Shared>, p: Result<Path<Id>, PathRejection>) -> Reply<Study> {
    let id = path(p)?;
    with_workbench(&s, move |wb| Ok(wb.get::<Study>(id)?.clone()))
        .await
        .map(Json)
}

// ---- datasets ---------------------------------------------------------------

#[derive(Deserialize)]
struct ImportRequest {
    #[serde(default)]
    study: Option<Id>,
    #[serde(default = "default_import_name")]
    name: String,
    csv: String,
    mapping: CsvMapping,
}

fn default_import_name() -> String {
    "import".into()
}

async fn import_dataset(State(s): State<Shared>, b: Result<Json<ImportRequest>, JsonRejection>) -> Created<Dataset> {
    let req = body(b)?;
    let ds = with_workbench(&s, move |wb| {
        Ok(wb.import_csv(req.study, &req.name, &req.csv, &req.mapping)?)
    })
    .await?;
    Ok(created(ds))
}

#[derive(Serialize)]
struct Member {
    id: Id,
    object: Id,
    key: String,
    attributes: BTreeMap<String, AttributeValue>,
}

#[derive(Serialize)]
struct DatasetView {
    #[serde(flatten)]
    dataset: Dataset,
    members: Vec<Member>,
}

async fn get_dataset(State(s): State<Shared>, p: Result<Path<Id>, PathRejection>) -> Reply<DatasetView> {
    let id = path(p)?;
    with_workbench(&s, move |wb| {
        let dataset = wb.get::<Dataset>(id)?.clone();
        let members = dataset
            .member_ids
            .iter()
            .map(|&m| {
                let ch = wb.get::<Characterization>(m)?;
                Ok(Member {
                    id: m,
                    object: ch.object_id,
                    key: wb.object_of(m)?.external_key.clone(),
                    attributes: ch.attributes.clone(),
                })
            })
            .collect::<Result<Vec<_>, Failure>>()?;
        Ok(DatasetView { dataset, members })
    })
    .await
    .map(Json)
}

#[derive(Deserialize)]
struct FilterRequest {
    #[serde(default)]
    study: Option<Id>,
    #[serde(default = "default_filter_name")]
    name: String,
    /// Structured clauses.
    #[serde(default)]
    clauses: Option<FilterSpec>,
    /// Clauses in text form, one per entry.
    #[serde(default)]
    lines: Option<Vec<String>>,
}

fn default_filter_name() -> String {
    "filtered".into()
}

async fn filter_dataset(
    State(s): State<Shared>,
    p: Result<Path<Id>, PathRejection>,
    b: Result<Json<FilterRequest>, JsonRejection>,
) -> Created<FilterOutcome> {
    let (id, req) = (path(p)?, body(b)?);
    let spec = match (req.clauses, req.lines) {
        (Some(spec), None) => spec,
        (None, Some(lines)) => {
            let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
            FilterSpec::parse(&refs).map_err(workbench_core::workbench::Error::from)?
        }
        _ => return Err(Failure::bad_request("give exactly one of `clauses` and `lines`")),
    };
    let out = with_workbench(&s, move |wb| Ok(wb.filter_dataset(req.study, id, &spec, &req.name)?)).await?;
    Ok(created(out))
}

async fn generate(
    State(s): State<Shared>,
    b: Result<Json<GenerateRequest>, JsonRejection>,
) -> Created<GenerateOutcome> {
    let req = body(b)?;
    let out = with_workbench(&s, move |wb| Ok(wb.generate(&req)?)).await?;
    Ok(created(out))
}

// ---- adjudication -------------------------------------------------------------

#[derive(Deserialize)]
struct OpenSession {
    dataset: Id,
    #[serde(default)]
    question: Option<String>,
    #[serde(default)]
    choices: Option<Vec<String>>,
}

async fn open_session(State(s): State<Shared>, b: Result<Json<OpenSession>, JsonRejection>) -> Created<SessionInfo> {
    let req = body(b)?;
    let info = with_workbench(&s, move |wb| {
        Ok(wb.open_session(req.dataset, req.question, req.choices)?)
    })
    .await?;
    Ok(created(info))
}

#[derive(Serialize)]
struct SessionView {
    #[serde(flatten)]
    info: SessionInfo,
    labels: Vec<Label>,
}

async fn get_session(State(s): State<Shared>, p: Result<Path<Id>, PathRejection>) -> Reply<SessionView> {
    let id = path(p)?;
    with_workbench(&s, move |wb| {
        let session = wb.kb().session(id).map_err(workbench_core::workbench::Error::from)?;
        Ok(SessionView {
            info: session.info,
            labels: session.labels,
        })
    })
    .await
    .map(Json)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelsBody {
    Batch { labels: Vec<LabelRow> },
    One(LabelRow),
}

async fn record_labels(
    State(s): State<Shared>,
    p: Result<Path<Id>, PathRejection>,
    b: Result<Json<LabelsBody>, JsonRejection>,
) -> Created<Vec<Label>> {
    let (id, req) = (path(p)?, body(b)?);
    let rows = match req {
        LabelsBody::Batch { labels } => labels,
        LabelsBody::One(row) => vec![row],
    };
    let labels = with_workbench(&s, move |wb| Ok(wb.record_labels(id, &rows)?)).await?;
    Ok(created(labels))
}

async fn close_session(State(s): State<Shared>, p: Result<Path<Id>, PathRejection>) -> Reply<SessionInfo> {
    let id = path(p)?;
    with_workbench(&s, move |wb| Ok(wb.close_session(id)?)).await.map(Json)
}

async fn session_metrics(State(s): State<Shared>, p: Result<Path<Id>, PathRejection>) -> Reply<SessionMetrics> {
    let id = path(p)?;
    with_workbench(&s, move |wb| Ok(wb.session_metrics(id)?))
        .await
        .map(Json)
}

// ---- triage ---------------------------------------------------------------------

#[derive(Deserialize)]
struct TrainRequest {
    #[serde(default)]
    study: Option<Id>,
    sessions: Vec<Id>,
    #[serde(default)]
    attributes: Vec<String>,
    #[serde(default)]
    config: TrainConfig,
}

/// A trained model without its (large) weight vector.
#[derive(Serialize)]
struct ModelSummary {
    id: Id,
    fingerprint: String,
    n_examples: usize,
    final_loss: f64,
    bias: f64,
    config: TrainConfig,
    schema: FeatureSchema,
}

impl From<TriageModel> for ModelSummary {
    fn from(m: TriageModel) -> Self {
        Self {
            id: m.id,
            fingerprint: m.fingerprint,
            n_examples: m.n_examples,
            final_loss: m.final_loss,
            bias: m.bias,
            config: m.config,
            schema: m.schema,
        }
    }
}

async fn train(State(s): State<Shared>, b: Result<Json<TrainRequest>, JsonRejection>) -> Created<ModelSummary> {
    let req = body(b)?;
    let model = with_workbench(&s, move |wb| {
        Ok(wb.train_triage(req.study, &req.sessions, &req.attributes, req.config)?)
    })
    .await?;
    Ok(created(model.into()))
}

#[derive(Deserialize)]
struct RankRequest {
    model: Id,
    dataset: Id,
    #[serde(default)]
    limit: Option<usize>,
}

#[derive(Serialize)]
struct Ranked {
    candidate: Id,
    key: String,
    score: f64,
}

async fn rank(State(s): State<Shared>, b: Result<Json<RankRequest>, JsonRejection>) -> Reply<Vec<Ranked>> {
    let req = body(b)?;
    with_workbench(&s, move |wb| {
        let ranked = wb.rank(req.model, req.dataset)?;
        let limit = req.limit.unwrap_or(ranked.len());
        ranked
            .into_iter()
            .take(limit)
            .map(|(candidate, score)| {
                Ok(Ranked {
                    candidate,
                    key: wb.object_of(candidate)?.external_key.clone(),
                    score,
                })
            })
            .collect()
    })
    .await
    .map(Json)
}

#[derive(Deserialize)]
struct ReduceRequest {
    #[serde(default)]
    study: Option<Id>,
    model: Id,
    dataset: Id,
    keep: f64,
    #[serde(default = "default_reduce_name")]
    name: String,
}

fn default_reduce_name() -> String {
    "reduced".into()
}

async fn reduce(State(s): State<Shared>, b: Result<Json<ReduceRequest>, JsonRejection>) -> Created<Dataset> {
    let req = body(b)?;
    let ds = with_workbench(&s, move |wb| {
        Ok(wb.reduce(req.study, req.model, req.dataset, req.keep, &req.name)?)
    })
    .await?;
    Ok(created(ds))
}

// ---- KaRA: characterization ---------------------------------------------------

#[derive(Deserialize)]
struct RiskFactorRequest {
    name: String,
    questions: Vec<Question>,
}

async fn add_risk_factor(
    State(s): State<Shared>,
    b: Result<Json<RiskFactorRequest>, JsonRejection>,
) -> Created<RiskFactor> {
    let req = body(b)?;
    let f = with_workbench(&s, move |wb| Ok(wb.add_risk_factor(&req.name, req.questions)?)).await?;
    Ok(created(f))
}

async fn list_risk_factors(State(s): State<Shared>) -> Reply<Vec<RiskFactor>> {
    with_workbench(&s, |wb| Ok(wb.kb().list::<RiskFactor>().cloned().collect()))
        .await
        .map(Json)
}

#[derive(Deserialize)]
struct AnswersRequest {
    candidate: Id,
    risk_factor: Id,
    expert: String,
    answers: BTreeMap<String, Answer>,
    #[serde(default)]
    evidence_ids: Vec<Id>,
    #[serde(default)]
    assessed_lok: Option<f64>,
}

async fn submit_answers(State(s): State<Shared>, b: Result<Json<AnswersRequest>, JsonRejection>) -> Created<AnswerSet> {
    let r = body(b)?;
    let set = with_workbench(&s, move |wb| {
        Ok(wb.submit_answers(
            r.candidate,
            r.risk_factor,
            &r.expert,
            r.answers,
            r.evidence_ids,
            r.assessed_lok,
        )?)
    })
    .await?;
    Ok(created(set))
}

#[derive(Deserialize)]
struct EvidenceQuery {
    question: String,
    #[serde(default = "default_k")]
    k: usize,
}

fn default_k() -> usize {
    5
}

#[derive(Serialize)]
struct ScoredEvidence {
    #[serde(flatten)]
    item: EvidenceItem,
    score: f64,
}

async fn retrieve_evidence(
    State(s): State<Shared>,
    q: Result<Query<EvidenceQuery>, QueryRejection>,
) -> Reply<Vec<ScoredEvidence>> {
    let q = query(q)?;
    with_workbench(&s, move |wb| {
        Ok(wb
            .retrieve_evidence(&q.question, q.k)?
            .into_iter()
            .map(|(item, score)| ScoredEvidence { item, score })
            .collect())
    })
    .await
    .map(Json)
}

#[derive(Deserialize)]
struct AddEvidence {
    text: String,
    source: String,
}

async fn add_evidence(State(s): State<Shared>, b: Result<Json<AddEvidence>, JsonRejection>) -> Created<EvidenceItem> {
    let req = body(b)?;
    let item = with_workbench(&s, move |wb| Ok(wb.add_evidence(&req.text, &req.source)?)).await?;
    Ok(created(item))
}

#[derive(Deserialize)]
struct CurateRequest {
    question: String,
    verdict: Verdict,
    /// Attach the item to this question of a risk factor (relevant only).
    #[serde(default)]
    risk_factor: Option<Id>,
    #[serde(default)]
    question_id: Option<String>,
}

async fn curate_evidence(
    State(s): State<Shared>,
    p: Result<Path<Id>, PathRejection>,
    b: Result<Json<CurateRequest>, JsonRejection>,
) -> Reply<EvidenceItem> {
    let (id, req) = (path(p)?, body(b)?);
    let attach = match (req.risk_factor, req.question_id) {
        (Some(f), Some(q)) => Some((f, q)),
        (None, None) => None,
        _ => return Err(Failure::bad_request("`risk_factor` and `question_id` go together")),
    };
    with_workbench(&s, move |wb| {
        Ok(wb.curate_evidence(id, &req.question, req.verdict, attach)?)
    })
    .await
    .map(Json)
}

// ---- KaRA: LOK ------------------------------------------------------------------

#[derive(Deserialize)]
struct ComparisonRequest {
    risk_factor: Id,
    expert: String,
    a: Id,
    b: Id,
    relation: LokRelation,
}

async fn add_comparison(
    State(s): State<Shared>,
    b: Result<Json<ComparisonRequest>, JsonRejection>,
) -> Created<PairwiseComparison> {
    let r = body(b)?;
    let c = with_workbench(&s, move |wb| {
        Ok(wb.add_comparison(r.risk_factor, &r.expert, r.a, r.b, r.relation)?)
    })
    .await?;
    Ok(created(c))
}

#[derive(Deserialize)]
struct ComparisonsQuery {
    risk_factor: Id,
    #[serde(default)]
    expert: Option<String>,
}

async fn list_comparisons(
    State(s): State<Shared>,
    q: Result<Query<ComparisonsQuery>, QueryRejection>,
) -> Reply<Vec<PairwiseComparison>> {
    let q = query(q)?;
    with_workbench(&s, move |wb| Ok(wb.comparisons(q.risk_factor, q.expert.as_deref())))
        .await
        .map(Json)
}

#[derive(Deserialize)]
struct CalibrateRequest {
    risk_factor: Id,
    #[serde(default = "global")]
    scope: ScaleScope,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
}

fn global() -> ScaleScope {
    ScaleScope::Global
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

async fn calibrate(State(s): State<Shared>, b: Result<Json<CalibrateRequest>, JsonRejection>) -> Created<LokScale> {
    let r = body(b)?;
    let scale = with_workbench(&s, move |wb| Ok(wb.calibrate(r.risk_factor, r.scope, r.epsilon)?)).await?;
    Ok(created(scale))
}

#[derive(Deserialize)]
struct FactorRequest {
    risk_factor: Id,
}

async fn consensus_comparisons(
    State(s): State<Shared>,
    b: Result<Json<FactorRequest>, JsonRejection>,
) -> Reply<ConsensusOutcome> {
    let r = body(b)?;
    with_workbench(&s, move |wb| Ok(wb.consensus(r.risk_factor)?))
        .await
        .map(Json)
}

// ---- KaRA: POS ------------------------------------------------------------------

#[derive(Deserialize)]
struct RegionQuery {
    lok: f64,
}

async fn region(State(s): State<Shared>, q: Result<Query<RegionQuery>, QueryRejection>) -> Reply<PosRegion> {
    let q = query(q)?;
    with_workbench(&s, move |wb| Ok(wb.region(q.lok)?)).await.map(Json)
}

#[derive(Deserialize)]
struct PosRequest {
    risk_factor: Id,
    expert: String,
    candidate: Id,
    pos: f64,
}

async fn submit_pos(State(s): State<Shared>, b: Result<Json<PosRequest>, JsonRejection>) -> Created<PosAssessment> {
    let r = body(b)?;
    let a = with_workbench(&s, move |wb: &mut Workbench| {
        Ok(wb.submit_pos(r.risk_factor, &r.expert, r.candidate, r.pos)?)
    })
    .await?;
    if a.valid {
        Ok(created(a))
    } else {
        Err(Failure::out_of_region(&a))
    }
}

#[derive(Deserialize)]
struct OverlayQuery {
    candidate: Id,
    risk_factor: Id,
    #[serde(default = "default_k")]
    k: usize,
}

async fn overlay(State(s): State<Shared>, q: Result<Query<OverlayQuery>, QueryRejection>) -> Reply<Vec<OverlayEntry>> {
    let q = query(q)?;
    with_workbench(&s, move |wb| Ok(wb.overlay(q.risk_factor, q.candidate, q.k)?))
        .await
        .map(Json)
}

#[derive(Deserialize)]
struct ConsensusPosRequest {
    risk_factor: Id,
    candidate: Id,
}

async fn consensus_pos(
    State(s): State<Shared>,
    b: Result<Json<ConsensusPosRequest>, JsonRejection>,
) -> Created<FinalPos> {
    let r = body(b)?;
    let f = with_workbench(&s, move |wb| Ok(wb.consensus_pos(r.risk_factor, r.candidate)?)).await?;
    Ok(created(f))
}

#[derive(Deserialize)]
struct ReportQuery {
    #[serde(default)]
    mode: RollupMode,
}

async fn report(
    State(s): State<Shared>,
    p: Result<Path<Id>, PathRejection>,
    q: Result<Query<ReportQuery>, QueryRejection>,
) -> Reply<CandidateReport> {
    let (candidate, q) = (path(p)?, query(q)?);
    with_workbench(&s, move |wb| Ok(wb.report(candidate, q.mode)?))
        .await
        .map(Json)
}
