//! Command-level contracts: artifacts, manifests, and refusals on mismatched
//! or missing inputs.

use std::path::Path;
use std::process::Command;

use segland_cli::commands::{self, REPORT_FILE};
use segland_cli::manifest::{RunManifest, MANIFEST_FILE};
use segland_cli::plot::{CONFUSION_PLOT, IOU_PLOT};
use segland_cli::synth::{SynthConfig, TAXONOMY_FILE};
use segland_cli::CliError;
use segland_core::data::{Split, WeightMode};
use segland_core::eval::{AbsentPolicy, EvalReport};
use segland_core::io::{read_json, write_json};
use segland_core::ClassTaxonomy;
use segland_model::TrainConfig;

fn small_dataset(root: &Path) {
    let cfg = SynthConfig {
        base_train: 4,
        shots: 2,
        query: 2,
        test: 1,
        ..Default::default()
    };
    let config = root.join("synth.json");
    write_json(&config, &cfg).unwrap();
    commands::synth(&root.join("data"), Some(&config), 5).unwrap();
}

fn base_config(root: &Path) -> std::path::PathBuf {
    let path = root.join("base.json");
    let cfg = TrainConfig {
        epochs: 1,
        arch: "ref-tiny".into(),
        decoder_width: 8,
        embed_dim: 8,
        ..TrainConfig::default()
    };
    write_json(&path, &cfg).unwrap();
    path
}

#[test]
fn synth_layout_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let data = dir.path().join("data");
    for split in ["base-train", "support", "query"] {
        assert!(data.join(split).join("images").is_dir(), "{split}");
        assert!(data.join(split).join("labels").is_dir(), "{split}");
    }
    assert!(!data.join("test").join("labels").exists());
    let taxonomy: ClassTaxonomy = read_json(data.join(TAXONOMY_FILE)).unwrap();
    assert_eq!(taxonomy.num_classes(), 5);
    let manifest = RunManifest::load(&data).unwrap();
    assert_eq!(manifest.command, "synth");
    assert_eq!(manifest.seed, Some(5));
    assert!(manifest.config_digest.is_some());

    let weights_dir = dir.path().join("prep");
    commands::prepare(&data, Split::BaseTrain, WeightMode::Inverse, &weights_dir).unwrap();
    assert!(weights_dir.join(commands::WEIGHTS_FILE).is_file());
    assert!(weights_dir.join(MANIFEST_FILE).is_file());
}

#[test]
fn stages_refuse_wrong_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_dataset(root);
    let data = root.join("data");
    let config = base_config(root);

    assert!(matches!(
        commands::train_base(&root.join("nowhere"), Some(&config), None, &root.join("x")),
        Err(CliError::MissingArtifact(_))
    ));

    commands::train_base(&data, Some(&config), Some(3), &root.join("base")).unwrap();
    let novel_cfg = root.join("novel.json");
    write_json(
        &novel_cfg,
        &TrainConfig {
            epochs: 1,
            ..TrainConfig::novel_default()
        },
    )
    .unwrap();
    commands::update_novel(&root.join("base"), &data, Some(&novel_cfg), None, &root.join("novel")).unwrap();
    // Novel updating only starts from a base checkpoint.
    assert!(matches!(
        commands::update_novel(&root.join("novel"), &data, Some(&novel_cfg), None, &root.join("again")),
        Err(CliError::Model(segland_model::Error::Phase(_)))
    ));

    commands::predict(&[root.join("novel")], &data, Split::Query, &root.join("pred")).unwrap();
    let (_, report) = commands::evaluate(&root.join("pred"), &data, Split::Query, AbsentPolicy::Exclude, &root.join("eval")).unwrap();
    let stored: EvalReport = read_json(root.join("eval").join(REPORT_FILE)).unwrap();
    assert_eq!(stored, report);
    assert!(report.novel_miou.is_some());

    // Predictions made under another taxonomy are rejected.
    let mut other: ClassTaxonomy = read_json(root.join("pred").join(TAXONOMY_FILE)).unwrap();
    other.names.insert(4, "renamed".into());
    write_json(root.join("pred").join(TAXONOMY_FILE), &other).unwrap();
    assert!(matches!(
        commands::evaluate(&root.join("pred"), &data, Split::Query, AbsentPolicy::Exclude, &root.join("eval2")),
        Err(CliError::DigestMismatch { .. })
    ));

    let plots = root.join("plots");
    commands::plot(&root.join("eval").join(REPORT_FILE), &plots).unwrap();
    for name in [IOU_PLOT, CONFUSION_PLOT] {
        let bytes = std::fs::read(plots.join(name)).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }
}

#[test]
fn base_only_predictions_score_against_the_full_taxonomy() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_dataset(root);
    let data = root.join("data");
    commands::train_base(&data, Some(&base_config(root)), None, &root.join("base")).unwrap();
    commands::predict(&[root.join("base")], &data, Split::Query, &root.join("pred")).unwrap();
    let (_, report) =
        commands::evaluate(&root.join("pred"), &data, Split::Query, AbsentPolicy::Zero, &root.join("eval")).unwrap();
    assert_eq!(report.novel_miou, Some(0.0));
}

#[test]
fn binary_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_segland"))
        .args(["evaluate", "--pred", "missing", "--data-root", "missing", "--out", "eval"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing artifact"));

    let out = Command::new(env!("CARGO_BIN_EXE_segland"))
        .args(["synth", "--out", "d"])
        .env(segland_cli::NUM_WORKERS_ENV, "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}
