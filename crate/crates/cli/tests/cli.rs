use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use workbench_core::model::Dataset;
use workbench_core::store::KbOptions;
use workbench_core::triage::{write_label_csv, LabelRow};
use workbench_core::workbench::Workbench;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        assert_eq!(self.code, 0, "stderr: {}", self.stderr);
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}", self.stdout))
    }
}

fn workbench(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_workbench"))
        .args(args)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn demo(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo").join(file)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ingest_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("three.csv");
    std::fs::write(&csv, "smiles,lambda_max,family\nCC,250,a\nCCC,,b\nc1ccccc1,300,\n").unwrap();
    let kb = dir.path().join("kb");
    let r = workbench(&[
        "--kb",
        s(&kb),
        "ingest",
        "--csv",
        s(&csv),
        "--mapping",
        s(&demo("mapping.toml")),
    ])
    .json();
    assert_eq!(r["members"], 3);
    assert_eq!(r["name"], "three");

    let wb = Workbench::open(&kb, KbOptions::default()).unwrap();
    let id = r["id"].as_str().unwrap().parse().unwrap();
    assert_eq!(wb.member_keys(id).unwrap(), ["CC", "CCC", "c1ccccc1"]);
}

#[test]
fn json_mappings_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let mapping = dir.path().join("m.json");
    std::fs::write(
        &mapping,
        r#"{"kind": "molecule", "key_column": "smiles", "attributes": [{"column": "lambda_max", "kind": "numeric"}]}"#,
    )
    .unwrap();
    let r = workbench(&[
        "--kb",
        s(&dir.path().join("kb")),
        "ingest",
        "--csv",
        s(&demo("seeds.csv")),
        "--mapping",
        s(&mapping),
        "--name",
        "seeds",
    ])
    .json();
    assert_eq!(r["members"], 50);
}

#[test]
fn subcommands_chain_from_ingest_to_reduce() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    let kb = s(&kb);
    let seeds = workbench(&[
        "--kb",
        kb,
        "ingest",
        "--csv",
        s(&demo("seeds.csv")),
        "--mapping",
        s(&demo("mapping.toml")),
    ])
    .json();
    let generated = workbench(&[
        "--kb",
        kb,
        "--seed",
        "7",
        "generate",
        "--dataset",
        seeds["id"].as_str().unwrap(),
        "--n",
        "10000",
    ])
    .json();
    assert_eq!(generated["dataset"]["members"], 10000);
    let gen_id = generated["dataset"]["id"].as_str().unwrap().to_string();

    // Label 300 candidates by a visible rule so the model has something to learn.
    let rows: Vec<LabelRow> = {
        let wb = Workbench::open(kb, KbOptions::default()).unwrap();
        let ds = wb.get::<Dataset>(gen_id.parse().unwrap()).unwrap();
        let keys = wb.member_keys(ds.id).unwrap();
        ds.member_ids
            .iter()
            .zip(&keys)
            .take(300)
            .map(|(&c, k)| LabelRow {
                candidate_id: c,
                expert_id: "sme-1".into(),
                choice: if k.contains('O') { "Yes" } else { "No" }.into(),
            })
            .collect()
    };
    let labels = dir.path().join("labels.csv");
    std::fs::write(&labels, write_label_csv(&rows)).unwrap();
    let replay = workbench(&[
        "--kb",
        kb,
        "adjudicate-replay",
        "--labels",
        s(&labels),
        "--dataset",
        &gen_id,
        "--close",
    ])
    .json();
    assert_eq!(replay["recorded"], 300);
    assert_eq!(replay["metrics"]["total"], 300);
    let session = replay["session"].as_str().unwrap();

    let again = workbench(&[
        "--kb",
        kb,
        "adjudicate-replay",
        "--labels",
        s(&labels),
        "--session",
        session,
    ]);
    assert_eq!(again.code, 1);
    assert!(again.stderr.contains("\"code\":\"session-closed\""), "{}", again.stderr);

    let model = workbench(&["--kb", kb, "triage-train", "--session", session]).json();
    assert_eq!(model["n_examples"], 300);
    let model_id = model["model"].as_str().unwrap();

    let rank = workbench(&[
        "--kb",
        kb,
        "triage-rank",
        "--model",
        model_id,
        "--dataset",
        &gen_id,
        "--limit",
        "5",
    ]);
    assert_eq!(rank.code, 0, "{}", rank.stderr);
    let lines: Vec<&str> = rank.stdout.lines().collect();
    assert_eq!(lines[0], "rank,candidate_id,key,score");
    assert_eq!(lines.len(), 6);
    assert!(
        lines[1].contains('O'),
        "top candidate should match the labeling rule: {}",
        lines[1]
    );

    let reduced = workbench(&[
        "--kb",
        kb,
        "triage-reduce",
        "--model",
        model_id,
        "--dataset",
        &gen_id,
        "--keep",
        "0.1",
    ])
    .json();
    assert_eq!(reduced["members"], 1000);

    let bad_keep = workbench(&[
        "--kb",
        kb,
        "triage-reduce",
        "--model",
        model_id,
        "--dataset",
        &gen_id,
        "--keep",
        "1.5",
    ]);
    assert_eq!(bad_keep.code, 1);
    let body: Value = serde_json::from_str(bad_keep.stderr.trim()).unwrap();
    assert!(body["code"].is_string());
}

#[test]
fn pipeline_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(format!("{run}.json"));
        let r = workbench(&[
            "--kb",
            s(&dir.path().join(run)),
            "--seed",
            "7",
            "--out",
            s(&out),
            "pipeline",
            "--config",
            s(&demo("demo.toml")),
        ]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        reports.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);

    let report: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(report["generate"]["dataset"]["members"], 10000);
    assert_eq!(report["adjudicate"]["metrics"]["total"], 1000);
    assert_eq!(report["reduce"]["dataset"]["members"], 1000);
    assert_eq!(report["assess"]["candidates"].as_array().unwrap().len(), 8);

    // A different seed gives a different run.
    let other = workbench(&[
        "--kb",
        s(&dir.path().join("c")),
        "--seed",
        "8",
        "pipeline",
        "--config",
        s(&demo("demo.toml")),
    ])
    .json();
    assert_ne!(other["reduce"]["dataset"]["id"], report["reduce"]["dataset"]["id"]);
}

#[test]
fn assessment_commands_read_a_pipeline_kb() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    let kb = s(&kb);
    let report = workbench(&["--kb", kb, "--seed", "3", "pipeline", "--config", s(&demo("demo.toml"))]).json();
    let factor = report["assess"]["risk_factors"][0]["risk_factor"].as_str().unwrap();

    let consensus = workbench(&["--kb", kb, "consensus", "--risk-factor", factor]).json();
    assert!(consensus["cost"].is_u64());
    assert!(!consensus["selected"].as_array().unwrap().is_empty());

    let lp = dir.path().join("cal.lp");
    let scale = workbench(&[
        "--kb",
        kb,
        "lok-calibrate",
        "--risk-factor",
        factor,
        "--expert",
        "sme-2",
        "--dump-lp",
        s(&lp),
    ])
    .json();
    assert_eq!(scale["scope"], serde_json::json!({"type": "expert", "expert": "sme-2"}));
    let text = std::fs::read_to_string(&lp).unwrap();
    for section in ["Minimize", "Subject To", "Bounds", "End"] {
        assert!(text.contains(section), "{section} missing from\n{text}");
    }

    let candidate = &report["assess"]["candidates"][0];
    let single = workbench(&[
        "--kb",
        kb,
        "pos-report",
        "--candidate",
        candidate["candidate"].as_str().unwrap(),
    ])
    .json();
    assert_eq!(&single, candidate);

    let min = workbench(&[
        "--kb",
        kb,
        "pos-report",
        "--candidate",
        candidate["candidate"].as_str().unwrap(),
        "--mode",
        "min",
    ])
    .json();
    let factors = min["rollup"]["factors"].as_object().unwrap();
    let lowest = factors
        .values()
        .map(|v| v.as_f64().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(min["rollup"]["overall"].as_f64().unwrap(), lowest);

    let csv = workbench(&["--kb", kb, "pos-report"]);
    assert_eq!(csv.code, 0);
    assert_eq!(csv.stdout.lines().count(), 1 + 8 * 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    let cases: [&[&str]; 5] = [
        &["consensus", "--risk-factor", "00000000000000000000000000000001"],
        &["--kb", s(&kb), "polish"],
        &["--kb", s(&kb), "consensus", "--risk-factor", "not-an-id"],
        &[
            "--kb",
            s(&kb),
            "triage-reduce",
            "--model",
            "00000000000000000000000000000001",
        ],
        &["--kb", s(&kb), "adjudicate-replay", "--labels", "x.csv"],
    ];
    for args in cases {
        let r = workbench(args);
        assert_eq!(r.code, 2, "{args:?}: {}", r.stderr);
    }
    assert_eq!(workbench(&["--help"]).code, 0);
}

#[test]
fn module_errors_print_their_code() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    let r = workbench(&[
        "--kb",
        s(&kb),
        "consensus",
        "--risk-factor",
        "00000000000000000000000000000001",
    ]);
    assert_eq!(r.code, 1);
    let body: Value = serde_json::from_str(r.stderr.trim()).unwrap();
    assert_eq!(body["code"], "unknown-id");

    let r = workbench(&[
        "--kb",
        s(&kb),
        "pipeline",
        "--config",
        s(&dir.path().join("missing.toml")),
    ]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("\"code\":\"io\""), "{}", r.stderr);

    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "goal = \"g\"\nstages = [\"generate\"]\n[ingest]\ncsv = \"a\"\nmapping = \"b\"\n",
    )
    .unwrap();
    let r = workbench(&["--kb", s(&kb), "pipeline", "--config", s(&bad)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("\"code\":\"invalid-config\""), "{}", r.stderr);
}
