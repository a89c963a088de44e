use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use workbench_core::kara::ScaleScope;
use workbench_core::store::KbOptions;
use workbench_core::triage::{parse_label_csv, TrainConfig};
use workbench_core::workbench::{GenerateRequest, Workbench};

use crate::pipeline::{self, DatasetSummary, PipelineConfig, Stage, TrainSummary};
use crate::{Cli, CliError, Command, ABORT_AFTER_ENV, ABORT_EXIT_CODE};

fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let kb: PathBuf = cli
        .kb
        .clone()
        .ok_or_else(|| CliError::Usage("--kb <DIR> is required".into()))?;
    let options = KbOptions {
        seed: cli.seed,
        ..KbOptions::default()
    };

    if let Command::Serve { addr } = &cli.command {
        let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io("<runtime>", e))?;
        return Ok(runtime.block_on(workbench_service::serve(&kb, addr, options))?);
    }
    if let Command::Pipeline { config } = &cli.command {
        let config = PipelineConfig::load(config)?;
        let seed = cli.seed.or(config.seed).unwrap_or_else(rand::random);
        let mut wb = Workbench::open(
            &kb,
            KbOptions {
                seed: Some(seed),
                ..KbOptions::default()
            },
        )?;
        let abort_after = std::env::var(ABORT_AFTER_ENV).ok();
        let report = pipeline::run(&mut wb, &config, seed, |stage: Stage, so_far| {
            eprintln!(
                "stage-done {} {}",
                stage.name(),
                serde_json::to_string(so_far).unwrap_or_default()
            );
            if abort_after.as_deref() == Some(stage.name()) {
                std::process::exit(ABORT_EXIT_CODE);
            }
        })?;
        return emit(cli.out.as_deref(), &json(&report)?);
    }

    let mut wb = Workbench::open(&kb, options)?;
    let output = match cli.command {
        Command::Ingest {
            csv,
            mapping,
            name,
            study,
        } => {
            let mapping = pipeline::load_mapping(&mapping)?;
            let name = name.unwrap_or_else(|| {
                csv.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "import".into())
            });
            let ds = wb.import_csv(study, &name, &read(&csv)?, &mapping)?;
            json(&DatasetSummary::from(&ds))?
        }
        Command::Generate {
            dataset,
            n,
            max_len,
            study,
        } => {
            let mut req = GenerateRequest {
                study,
                seed_dataset: dataset,
                n,
                seed: cli.seed.unwrap_or_else(rand::random),
                max_len: workbench_core::generator::DEFAULT_MAX_LEN,
            };
            if let Some(m) = max_len {
                req.max_len = m;
            }
            let out = wb.generate(&req)?;
            json(&pipeline::GenerateSummary {
                dataset: (&out.dataset).into(),
                samples: out.samples,
                rejected_syntax: out.rejected_syntax,
                rejected_duplicate: out.rejected_duplicate,
                rejected_length: out.rejected_length,
                warning: out.warning,
            })?
        }
        Command::AdjudicateReplay {
            labels,
            session,
            dataset,
            question,
            close,
        } => {
            let rows = parse_label_csv(&read(&labels)?).map_err(workbench_core::workbench::Error::from)?;
            let session = match (session, dataset) {
                (Some(s), _) => s,
                (None, Some(d)) => wb.open_session(d, question, None)?.id,
                (None, None) => return Err(CliError::Usage("give --session or --dataset".into())),
            };
            wb.record_labels(session, &rows)?;
            if close {
                wb.close_session(session)?;
            }
            json(&serde_json::json!({
                "session": session,
                "recorded": rows.len(),
                "metrics": wb.session_metrics(session)?,
            }))?
        }
        Command::TriageTrain {
            sessions,
            attributes,
            learning_rate,
            iterations,
            l2,
            study,
        } => {
            let defaults = TrainConfig::default();
            let config = TrainConfig {
                learning_rate: learning_rate.unwrap_or(defaults.learning_rate),
                iterations: iterations.unwrap_or(defaults.iterations),
                l2: l2.unwrap_or(defaults.l2),
                seed: cli.seed.unwrap_or(defaults.seed),
            };
            let attributes = if attributes.is_empty() {
                pipeline::TriageConfig::default().attributes()
            } else {
                attributes
            };
            let model = wb.train_triage(study, &sessions, &attributes, config)?;
            json(&TrainSummary {
                model: model.id,
                fingerprint: model.fingerprint,
                n_examples: model.n_examples,
                final_loss: model.final_loss,
            })?
        }
        Command::TriageRank { model, dataset, limit } => {
            let ranked = pipeline::ranked(&wb, model, dataset, limit.unwrap_or(usize::MAX))?;
            let mut csv = String::from("rank,candidate_id,key,score\n");
            for (i, r) in ranked.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},\"{}\",{}\n",
                    i + 1,
                    r.candidate,
                    r.key.replace('"', "\"\""),
                    r.score
                ));
            }
            csv
        }
        Command::TriageReduce {
            model,
            dataset,
            keep,
            name,
            study,
        } => {
            let ds = wb.reduce(study, model, dataset, keep, &name)?;
            json(&DatasetSummary::from(&ds))?
        }
        Command::LokCalibrate {
            risk_factor,
            expert,
            epsilon,
            dump_lp,
        } => {
            let scope = expert.map_or(ScaleScope::Global, ScaleScope::Expert);
            if let Some(path) = dump_lp {
                let text = wb.calibration_lp_text(risk_factor, &scope, epsilon)?;
                std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
            }
            json(&wb.calibrate(risk_factor, scope, epsilon)?)?
        }
        Command::Consensus { risk_factor } => json(&wb.consensus(risk_factor)?)?,
        Command::PosReport { candidate, mode } => match candidate {
            Some(c) => json(&wb.report(c, mode.into())?)?,
            None => wb.assessments_csv(),
        },
        Command::Pipeline { .. } | Command::Serve { .. } => unreachable!("handled above"),
    };
    emit(cli.out.as_deref(), &output)
}
