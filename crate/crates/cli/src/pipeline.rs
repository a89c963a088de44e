//! The end-to-end discovery flow, driven by a single TOML file.
//!
//! The file names the stages to run and their parameters. Stages always run
//! in the order `ingest`, `generate`, `adjudicate`, `train`, `reduce`,
//! `assess`, and a config may stop after any of them. Relative paths are
//! resolved against the directory holding the config. `demo/demo.toml`
//! documents every key.
//!
//! Adjudication and assessment are played by scripted experts: a hidden
//! linear rule over the triage features answers the adjudication question,
//! and the assessors perceive hidden per-candidate LOK and POS values through
//! their own noise. Every random choice derives from the run seed, and the
//! knowledge base ids are seeded from it too, so the same config and seed
//! give the same report byte for byte.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use workbench_core::generator::{constitutional_features, DEFAULT_MAX_LEN};
use workbench_core::id::Id;
use workbench_core::ingest::CsvMapping;
use workbench_core::kara::{Answer, AnswerKind, Question, RiskFactor, RollupMode, ScaleScope};
use workbench_core::model::{Characterization, Dataset};
use workbench_core::sme::{hidden_lok, hidden_pos, LinearRule, ScriptedAssessor, ScriptedSme};
use workbench_core::triage::{FeatureSchema, SessionMetrics, TrainConfig};
use workbench_core::workbench::{CandidateReport, GenerateRequest, Workbench};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Generate,
    Adjudicate,
    Train,
    Reduce,
    Assess,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Generate,
        Stage::Adjudicate,
        Stage::Train,
        Stage::Reduce,
        Stage::Assess,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Generate => "generate",
            Stage::Adjudicate => "adjudicate",
            Stage::Train => "train",
            Stage::Reduce => "reduce",
            Stage::Assess => "assess",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub goal: String,
    #[serde(default)]
    pub participants: Vec<String>,
    /// Used when no seed is given on the command line.
    #[serde(default)]
    pub seed: Option<u64>,
    pub stages: Vec<Stage>,
    pub ingest: IngestConfig,
    #[serde(default)]
    pub generate: GenerateConfig,
    #[serde(default)]
    pub adjudicate: AdjudicateConfig,
    #[serde(default)]
    pub triage: TriageConfig,
    #[serde(default)]
    pub assess: AssessConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub csv: PathBuf,
    pub mapping: PathBuf,
    #[serde(default = "IngestConfig::default_name")]
    pub name: String,
}

impl IngestConfig {
    fn default_name() -> String {
        "seeds".into()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub n: usize,
    pub max_len: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdjudicateConfig {
    /// Number of generated candidates labeled, taken in dataset order.
    pub labels: usize,
    pub expert: String,
    pub question: Option<String>,
    /// Share of the generated population the hidden rule answers Yes.
    pub accept: f64,
    pub uncertain: f64,
    /// Noise on the hidden score, relative to its spread.
    pub noise: f64,
}

impl Default for AdjudicateConfig {
    fn default() -> Self {
        Self {
            labels: 1000,
            expert: "sme-1".into(),
            question: None,
            accept: 0.3,
            uncertain: 0.2,
            noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriageConfig {
    /// Attributes fed to the model; empty means every constitutional descriptor.
    pub attributes: Vec<String>,
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
    pub keep: f64,
    pub name: String,
}

impl Default for TriageConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            attributes: Vec::new(),
            learning_rate: t.learning_rate,
            iterations: t.iterations,
            l2: t.l2,
            keep: 0.1,
            name: "triaged".into(),
        }
    }
}

impl TriageConfig {
    pub fn attributes(&self) -> Vec<String> {
        if self.attributes.is_empty() {
            constitutional_features("C").into_keys().collect()
        } else {
            self.attributes.clone()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssessConfig {
    /// Top-ranked members of the reduced dataset put through assessment.
    pub candidates: usize,
    /// Candidates outside the reduced dataset given an assessed LOK, used
    /// as the reference corpus.
    pub corpus: usize,
    pub experts: Vec<String>,
    /// Comparisons attempted per expert and risk factor.
    pub comparisons: usize,
    pub epsilon: f64,
    pub lok_noise: f64,
    pub tie_band: f64,
    pub pos_noise: f64,
    pub rollup: RollupMode,
    pub risk_factors: Vec<RiskFactorConfig>,
}

impl Default for AssessConfig {
    fn default() -> Self {
        Self {
            candidates: 8,
            corpus: 24,
            experts: vec!["sme-1".into(), "sme-2".into(), "sme-3".into()],
            comparisons: 10,
            epsilon: 0.02,
            lok_noise: 0.08,
            tie_band: 0.05,
            pos_noise: 0.1,
            rollup: RollupMode::Product,
            risk_factors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskFactorConfig {
    pub name: String,
    pub questions: Vec<Question>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: Self =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.stages.is_empty() {
            return bad("no stages listed");
        }
        if self.stages.iter().zip(Stage::ALL).any(|(a, b)| *a != b) {
            return bad("stages must be a prefix of ingest, generate, adjudicate, train, reduce, assess");
        }
        if self.stages.len() > Stage::ALL.len() {
            return bad("a stage is listed twice");
        }
        if self.runs(Stage::Assess) {
            if self.assess.risk_factors.is_empty() {
                return bad("the assess stage needs at least one risk factor");
            }
            if self.assess.experts.is_empty() {
                return bad("the assess stage needs at least one expert");
            }
        }
        Ok(())
    }

    pub fn runs(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub id: Id,
    pub name: String,
    pub members: usize,
}

impl From<&Dataset> for DatasetSummary {
    fn from(d: &Dataset) -> Self {
        Self {
            id: d.id,
            name: d.name.clone(),
            members: d.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub dataset: DatasetSummary,
    pub samples: usize,
    pub rejected_syntax: usize,
    pub rejected_duplicate: usize,
    pub rejected_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicateSummary {
    pub session: Id,
    pub expert: String,
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model: Id,
    pub fingerprint: String,
    pub n_examples: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub candidate: Id,
    pub key: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReduceSummary {
    pub dataset: DatasetSummary,
    pub keep: f64,
    pub top: Vec<Ranked>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSummary {
    pub risk_factor: Id,
    pub name: String,
    pub corpus: usize,
    pub comparisons_accepted: usize,
    pub comparisons_rejected: usize,
    pub consensus_cost: u64,
    pub global_adjustment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessSummary {
    pub risk_factors: Vec<FactorSummary>,
    pub candidates: Vec<CandidateReport>,
}

/// What a run did, stage by stage. Holds no timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub goal: String,
    pub seed: u64,
    pub study: Id,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<DatasetSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjudicate: Option<AdjudicateSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduce: Option<ReduceSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assess: Option<AssessSummary>,
}

/// Independent stream for one purpose, derived from the run seed.
fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn load_mapping(path: &Path) -> Result<CsvMapping, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Config(format!("mapping {}: {e}", path.display())))
}

/// Runs the configured stages against `wb`. `on_stage` is called after each
/// stage has been written, with the report so far.
pub fn run(
    wb: &mut Workbench,
    config: &PipelineConfig,
    seed: u64,
    mut on_stage: impl FnMut(Stage, &PipelineReport),
) -> Result<PipelineReport, CliError> {
    config.validate()?;
    let study = wb.create_study(&config.goal, config.participants.clone())?;
    let mut report = PipelineReport {
        goal: config.goal.clone(),
        seed,
        study: study.id,
        ingest: None,
        generate: None,
        adjudicate: None,
        train: None,
        reduce: None,
        assess: None,
    };
    let study = Some(study.id);
    let attributes = config.triage.attributes();

    for &stage in &config.stages {
        log::info!("stage {}", stage.name());
        match stage {
            Stage::Ingest => {
                let csv_path = config.resolve(&config.ingest.csv);
                let csv = std::fs::read_to_string(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
                let mapping = load_mapping(&config.resolve(&config.ingest.mapping))?;
                let ds = wb.import_csv(study, &config.ingest.name, &csv, &mapping)?;
                report.ingest = Some((&ds).into());
            }
            Stage::Generate => {
                let seeds = report.ingest.as_ref().map(|d| d.id).expect("ingest ran");
                let out = wb.generate(&GenerateRequest {
                    study,
                    seed_dataset: seeds,
                    n: config.generate.n,
                    seed: sub_seed(seed, 1),
                    max_len: config.generate.max_len,
                })?;
                report.generate = Some(GenerateSummary {
                    dataset: (&out.dataset).into(),
                    samples: out.samples,
                    rejected_syntax: out.rejected_syntax,
                    rejected_duplicate: out.rejected_duplicate,
                    rejected_length: out.rejected_length,
                    warning: out.warning,
                });
            }
            Stage::Adjudicate => {
                let generated = report.generate.as_ref().map(|g| g.dataset.id).expect("generate ran");
                report.adjudicate = Some(adjudicate(wb, &config.adjudicate, &attributes, generated, seed)?);
            }
            Stage::Train => {
                let session = report.adjudicate.as_ref().map(|a| a.session).expect("adjudicate ran");
                let t = &config.triage;
                let model = wb.train_triage(
                    study,
                    &[session],
                    &attributes,
                    TrainConfig {
                        learning_rate: t.learning_rate,
                        iterations: t.iterations,
                        l2: t.l2,
                        seed,
                    },
                )?;
                report.train = Some(TrainSummary {
                    model: model.id,
                    fingerprint: model.fingerprint,
                    n_examples: model.n_examples,
                    final_loss: model.final_loss,
                });
            }
            Stage::Reduce => {
                let generated = report.generate.as_ref().map(|g| g.dataset.id).expect("generate ran");
                let model = report.train.as_ref().map(|t| t.model).expect("train ran");
                let ds = wb.reduce(study, model, generated, config.triage.keep, &config.triage.name)?;
                let top = ranked(wb, model, ds.id, 10)?;
                report.reduce = Some(ReduceSummary {
                    dataset: (&ds).into(),
                    keep: config.triage.keep,
                    top,
                });
            }
            Stage::Assess => {
                let generated = report.generate.as_ref().map(|g| g.dataset.id).expect("generate ran");
                let model = report.train.as_ref().map(|t| t.model).expect("train ran");
                let reduced = report.reduce.as_ref().map(|r| r.dataset.id).expect("reduce ran");
                report.assess = Some(assess(wb, &config.assess, model, generated, reduced, seed)?);
            }
        }
        on_stage(stage, &report);
    }
    Ok(report)
}

/// The first `limit` members of `dataset` by model score.
pub fn ranked(wb: &Workbench, model: Id, dataset: Id, limit: usize) -> Result<Vec<Ranked>, CliError> {
    wb.rank(model, dataset)?
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
}

fn adjudicate(
    wb: &mut Workbench,
    config: &AdjudicateConfig,
    attributes: &[String],
    generated: Id,
    seed: u64,
) -> Result<AdjudicateSummary, CliError> {
    let members = wb.get::<Dataset>(generated)?.member_ids.clone();
    let schema = {
        let chars = members
            .iter()
            .map(|&m| wb.get::<Characterization>(m))
            .collect::<Result<Vec<_>, _>>()?;
        FeatureSchema::fit(attributes, chars.iter().copied())
    };
    let features = members
        .iter()
        .map(|&m| wb.features(m, &schema))
        .collect::<Result<Vec<_>, _>>()?;
    let rule = LinearRule::gaussian(schema.dim(), sub_seed(seed, 2));
    let mut sme = ScriptedSme::new(
        config.expert.clone(),
        rule,
        &features,
        config.accept,
        config.uncertain,
        config.noise,
        sub_seed(seed, 3),
    );
    let rows: Vec<_> = members
        .iter()
        .zip(&features)
        .take(config.labels)
        .map(|(&candidate, f)| workbench_core::triage::LabelRow {
            candidate_id: candidate,
            expert_id: config.expert.clone(),
            choice: sme.judge(f).to_string(),
        })
        .collect();
    let session = wb.open_session(generated, config.question.clone(), None)?;
    wb.record_labels(session.id, &rows)?;
    wb.close_session(session.id)?;
    Ok(AdjudicateSummary {
        session: session.id,
        expert: config.expert.clone(),
        metrics: wb.session_metrics(session.id)?,
    })
}

/// Answers every question of `factor` from a perceived LOK.
fn answers(factor: &RiskFactor, who: &mut ScriptedAssessor, lok: f64) -> BTreeMap<String, Answer> {
    factor
        .questions
        .iter()
        .map(|q| {
            let answer = match &q.kind {
                AnswerKind::Ordinal { levels } => Answer::Text(levels[who.ordinal(lok, levels.len())].clone()),
                AnswerKind::Categorical { vocabulary } => {
                    Answer::Text(vocabulary[who.ordinal(lok, vocabulary.len())].clone())
                }
                AnswerKind::Numeric { min, max } => {
                    Answer::Number(min + (max - min) * who.ordinal(lok, 101) as f64 / 100.0)
                }
            };
            (q.id.clone(), answer)
        })
        .collect()
}

fn assess(
    wb: &mut Workbench,
    config: &AssessConfig,
    model: Id,
    generated: Id,
    reduced: Id,
    seed: u64,
) -> Result<AssessSummary, CliError> {
    let top: Vec<Id> = wb
        .rank(model, reduced)?
        .into_iter()
        .take(config.candidates)
        .map(|(c, _)| c)
        .collect();
    let kept: HashSet<Id> = wb.get::<Dataset>(reduced)?.member_set();
    let corpus: Vec<Id> = wb
        .get::<Dataset>(generated)?
        .member_ids
        .iter()
        .rev()
        .filter(|c| !kept.contains(c))
        .take(config.corpus)
        .copied()
        .collect();

    let mut factors = Vec::new();
    for (fi, fc) in config.risk_factors.iter().enumerate() {
        let factor = wb.add_risk_factor(&fc.name, fc.questions.clone())?;
        let salt = sub_seed(seed, 100 + fi as u64);
        let assessor = |i: usize, e: &str| {
            ScriptedAssessor::new(
                e,
                config.lok_noise,
                config.tie_band,
                config.pos_noise,
                sub_seed(salt, i as u64),
            )
        };

        let curator = &config.experts[0];
        let mut reference = assessor(0, curator);
        for &c in &corpus {
            let lok = hidden_lok(c, salt);
            let a = answers(&factor, &mut reference, lok);
            wb.submit_answers(c, factor.id, curator, a, Vec::new(), Some(lok))?;
        }

        let mut experts: Vec<ScriptedAssessor> = config
            .experts
            .iter()
            .enumerate()
            .map(|(i, e)| assessor(i + 1, e))
            .collect();
        for who in experts.iter_mut() {
            for &c in &top {
                let a = answers(&factor, who, hidden_lok(c, salt));
                wb.submit_answers(c, factor.id, &who.expert.clone(), a, Vec::new(), None)?;
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(salt, 1000));
        let (mut accepted, mut rejected) = (0, 0);
        if top.len() >= 2 {
            for who in experts.iter_mut() {
                for _ in 0..config.comparisons {
                    let i = rng.gen_range(0..top.len());
                    let j = (i + rng.gen_range(1..top.len())) % top.len();
                    let (a, b, relation) =
                        who.compare((top[i], hidden_lok(top[i], salt)), (top[j], hidden_lok(top[j], salt)));
                    match wb.add_comparison(factor.id, &who.expert.clone(), a, b, relation) {
                        Ok(_) => accepted += 1,
                        Err(e) if e.code() == "contradiction" => rejected += 1,
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
        let consensus_cost = if accepted > 0 { wb.consensus(factor.id)?.cost } else { 0 };

        for who in experts.iter_mut() {
            let scale = wb.calibrate(factor.id, ScaleScope::Expert(who.expert.clone()), config.epsilon)?;
            for &c in &top {
                let lok = scale.lok(c).expect("answered candidates are on the scale");
                let pos = who.pos(hidden_pos(c, salt), &wb.region(lok)?);
                wb.submit_pos(factor.id, &who.expert.clone(), c, pos)?;
            }
        }
        let global = wb.calibrate(factor.id, ScaleScope::Global, config.epsilon)?;
        for &c in &top {
            wb.consensus_pos(factor.id, c)?;
        }
        factors.push(FactorSummary {
            risk_factor: factor.id,
            name: factor.name.clone(),
            corpus: corpus.len(),
            comparisons_accepted: accepted,
            comparisons_rejected: rejected,
            consensus_cost,
            global_adjustment: global.total_adjustment,
        });
    }
    let candidates = top
        .iter()
        .map(|&c| wb.report(c, config.rollup))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AssessSummary {
        risk_factors: factors,
        candidates,
    })
}
