//! One function per subcommand. Each reads declared artifacts, delegates to
//! the library, and writes its outputs plus a [`RunManifest`].

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use segland_core::data::{
    compute_class_frequencies, compute_class_weights, load_dataset, Split, TileSet, WeightMode, LABELS_DIR,
};
use segland_core::digest::canonical_digest;
use segland_core::eval::{build_report, AbsentPolicy, ConfusionMatrix, EvalReport};
use segland_core::fusion::{ultimate_fuse, FusionConfig, FusionMode};
use segland_core::io::{find_raster, read_json, read_label, write_json, write_label, write_probability_map};
use segland_core::{Checkpoint, CheckpointPhase, ClassTaxonomy, LabelMap, ProbabilityMap};
use segland_model::ensemble::{check_distinct, LearnerSpec};
use segland_model::{average_fusion, train_base_learner, train_base_phase, update_novel_phase, Predictor, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::plot;
use crate::synth::{self, SynthConfig, TAXONOMY_FILE};

pub const FREQUENCIES_FILE: &str = "frequencies.json";
pub const WEIGHTS_FILE: &str = "weights.json";
pub const PROBS_DIR: &str = "probs";
pub const REPORT_FILE: &str = "report.json";

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) if !p.is_file() => Err(CliError::MissingArtifact(p.to_path_buf())),
        Some(p) => Ok(read_json(p)?),
        None => Ok(T::default()),
    }
}

/// Taxonomy stored at a dataset or prediction root.
pub fn load_taxonomy(root: &Path) -> Result<ClassTaxonomy> {
    let path = root.join(TAXONOMY_FILE);
    if !path.is_file() {
        return Err(CliError::MissingArtifact(path));
    }
    let taxonomy: ClassTaxonomy = read_json(&path)?;
    taxonomy.validate()?;
    Ok(taxonomy)
}

fn load_split(data_root: &Path, split: Split, taxonomy: &ClassTaxonomy) -> Result<TileSet> {
    let dir = data_root.join(split.to_string());
    if !dir.is_dir() {
        return Err(CliError::MissingArtifact(dir));
    }
    Ok(load_dataset(dir, split, taxonomy)?)
}

fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    if !dir.join("meta.json").is_file() {
        return Err(CliError::MissingArtifact(dir.join("meta.json")));
    }
    Ok(Checkpoint::load(dir)?)
}

fn ensure_same(what: &str, expected: String, found: String) -> Result<()> {
    if expected != found {
        return Err(CliError::DigestMismatch {
            what: what.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

fn with_seed(mut config: TrainConfig, seed: Option<u64>) -> TrainConfig {
    if let Some(s) = seed {
        config.seed = s;
    }
    config
}

pub fn synth(out: &Path, config: Option<&Path>, seed: u64) -> Result<RunManifest> {
    let mut manifest = RunManifest::begin("synth");
    let cfg: SynthConfig = read_config(config)?;
    synth::write_dataset(out, &cfg, seed)?;
    manifest.config_paths.extend(config.map(Path::to_path_buf));
    manifest.config_digest = Some(canonical_digest(&cfg)?);
    manifest.seed = Some(seed);
    manifest.outputs.push(out.to_path_buf());
    manifest.finish(out)
}

pub fn prepare(data_root: &Path, split: Split, mode: WeightMode, out: &Path) -> Result<RunManifest> {
    let mut manifest = RunManifest::begin("prepare");
    let full = load_taxonomy(data_root)?;
    let taxonomy = if split == Split::BaseTrain {
        full.to_base_only()
    } else {
        full
    };
    let set = load_split(data_root, split, &taxonomy)?;
    let freqs = compute_class_frequencies(&set, &taxonomy)?;
    let weights = compute_class_weights(&freqs, mode)?;
    write_json(out.join(FREQUENCIES_FILE), &freqs)?;
    write_json(out.join(WEIGHTS_FILE), &weights)?;
    manifest.inputs.push(data_root.join(split.to_string()));
    manifest.outputs = vec![out.join(FREQUENCIES_FILE), out.join(WEIGHTS_FILE)];
    manifest.finish(out)
}

pub fn train_base(data_root: &Path, config_file: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<RunManifest> {
    let mut manifest = RunManifest::begin("train-base");
    let config = with_seed(read_config(config_file)?, seed);
    let taxonomy = load_taxonomy(data_root)?.to_base_only();
    let set = load_split(data_root, Split::BaseTrain, &taxonomy)?;
    let ckpt = train_base_phase(&set, &taxonomy, &config)?;
    ckpt.save(out)?;
    manifest.config_paths.extend(config_file.map(Path::to_path_buf));
    manifest.config_digest = Some(ckpt.config_digest.clone());
    manifest.seed = Some(config.seed);
    manifest.inputs.push(data_root.join(Split::BaseTrain.to_string()));
    manifest.outputs.push(out.to_path_buf());
    manifest.finish(out)
}

/// Learners trained by `train-ensemble`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub learners: Vec<LearnerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerEntry {
    pub arch_id: String,
    #[serde(default)]
    pub config: TrainConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        let learner = |arch: &str, seed| LearnerEntry {
            arch_id: arch.into(),
            config: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        };
        EnsembleConfig {
            learners: vec![
                learner("ref", 0),
                learner("ref-small", 1),
                learner("ref-tiny", 2),
                learner("ref-wide-tiny", 3),
            ],
        }
    }
}

pub fn learner_dir(out: &Path, index: usize, arch: &str) -> PathBuf {
    out.join(format!("learner-{index}-{arch}"))
}

pub fn train_ensemble(data_root: &Path, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<RunManifest> {
    let mut manifest = RunManifest::begin("train-ensemble");
    let cfg: EnsembleConfig = read_config(config)?;
    let taxonomy = load_taxonomy(data_root)?.to_base_only();
    let set = load_split(data_root, Split::BaseTrain, &taxonomy)?;
    let specs: Vec<LearnerSpec> = cfg
        .learners
        .iter()
        .enumerate()
        .map(|(i, l)| LearnerSpec {
            arch_id: l.arch_id.clone(),
            config: with_seed(l.config.clone(), seed.map(|s| s + i as u64)),
            checkpoint_path: learner_dir(out, i, &l.arch_id),
        })
        .collect();
    check_distinct(&specs)?;
    for spec in &specs {
        let mut learner_manifest = RunManifest::begin("train-ensemble/learner");
        let ckpt = train_base_learner(spec, &set, &taxonomy)?;
        learner_manifest.config_paths.extend(config.map(Path::to_path_buf));
        learner_manifest.config_digest = Some(ckpt.config_digest.clone());
        learner_manifest.seed = Some(spec.config.seed);
        learner_manifest.inputs.push(data_root.join(Split::BaseTrain.to_string()));
        learner_manifest.outputs.push(spec.checkpoint_path.clone());
        learner_manifest.finish(&spec.checkpoint_path)?;
        manifest.outputs.push(spec.checkpoint_path.clone());
    }
    manifest.config_paths.extend(config.map(Path::to_path_buf));
    manifest.config_digest = Some(canonical_digest(&cfg)?);
    manifest.seed = seed;
    manifest.inputs.push(data_root.join(Split::BaseTrain.to_string()));
    manifest.finish(out)
}

pub fn update_novel(
    checkpoint: &Path,
    data_root: &Path,
    config_file: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<RunManifest> {
    let mut manifest = RunManifest::begin("update-novel");
    let config = match config_file {
        Some(_) => read_config(config_file)?,
        None => TrainConfig::novel_default(),
    };
    let config = with_seed(config, seed);
    let base = load_checkpoint(checkpoint)?;
    if base.phase != CheckpointPhase::Base {
        return Err(segland_model::Error::Phase(format!(
            "{} holds a {} checkpoint; novel updating starts from a base checkpoint",
            checkpoint.display(),
            base.phase
        ))
        .into());
    }
    let taxonomy = load_taxonomy(data_root)?;
    ensure_same("base taxonomy", taxonomy.to_base_only().digest(), base.taxonomy.digest())?;
    let support = load_split(data_root, Split::Support, &taxonomy)?;
    let backgrounds = load_split(data_root, Split::BaseTrain, &taxonomy.to_base_only())?;
    let ckpt = update_novel_phase(&base, &support, &taxonomy, &config, Some(&backgrounds))?;
    ckpt.save(out)?;
    manifest.config_paths.extend(config_file.map(Path::to_path_buf));
    manifest.config_digest = Some(ckpt.config_digest.clone());
    manifest.seed = Some(config.seed);
    manifest.inputs = vec![
        checkpoint.to_path_buf(),
        data_root.join(Split::Support.to_string()),
        data_root.join(Split::BaseTrain.to_string()),
    ];
    manifest.outputs.push(out.to_path_buf());
    manifest.finish(out)
}

/// Predicts every tile of `split`; several checkpoints are fused by
/// probability averaging.
pub fn predict(checkpoints: &[PathBuf], data_root: &Path, split: Split, out: &Path) -> Result<RunManifest> {
    let mut manifest = RunManifest::begin("predict");
    if checkpoints.is_empty() {
        return Err(CliError::Invalid("predict needs at least one --checkpoint".into()));
    }
    let ckpts = checkpoints.iter().map(|p| load_checkpoint(p)).collect::<Result<Vec<_>>>()?;
    let taxonomy = ckpts[0].taxonomy.clone();
    for (path, c) in checkpoints.iter().zip(&ckpts) {
        ensure_same(
            &format!("taxonomy of {}", path.display()),
            taxonomy.digest(),
            c.taxonomy.digest(),
        )?;
    }
    let data_taxonomy = load_taxonomy(data_root)?;
    ensure_same(
        "base taxonomy",
        data_taxonomy.to_base_only().digest(),
        taxonomy.to_base_only().digest(),
    )?;
    let set = load_split(data_root, split, &data_taxonomy)?;
    let predictors = ckpts.iter().map(Predictor::from_checkpoint).collect::<Result<Vec<_>, _>>()?;

    let results: Vec<(String, ProbabilityMap)> = set
        .tiles
        .par_iter()
        .map(|tile| -> Result<(String, ProbabilityMap)> {
            let maps = predictors
                .iter()
                .map(|p| Ok(p.predict(&[&tile.image])?.remove(0).0))
                .collect::<Result<Vec<_>>>()?;
            Ok((tile.id.clone(), average_fusion(&maps)?))
        })
        .collect::<Result<_>>()?;

    for (id, probs) in &results {
        write_probability_map(out.join(PROBS_DIR), id, probs, &taxonomy)?;
        write_label(out.join(LABELS_DIR).join(format!("{id}.png")), &probs.argmax())?;
    }
    write_json(out.join(TAXONOMY_FILE), &taxonomy)?;
    manifest.config_digest = Some(canonical_digest(&ckpts.iter().map(|c| &c.config_digest).collect::<Vec<_>>())?);
    manifest.inputs = checkpoints.to_vec();
    manifest.inputs.push(data_root.join(split.to_string()));
    manifest.outputs = vec![out.join(PROBS_DIR), out.join(LABELS_DIR)];
    manifest.finish(out)
}

fn label_ids(dir: &Path) -> Result<Vec<String>> {
    let labels = dir.join(LABELS_DIR);
    if !labels.is_dir() {
        return Err(CliError::MissingArtifact(labels));
    }
    let mut ids: Vec<String> = std::fs::read_dir(&labels)
        .map_err(|e| CliError::io(&labels, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(String::from))
        .collect();
    ids.sort();
    Ok(ids)
}

fn read_prediction(dir: &Path, id: &str) -> Result<LabelMap> {
    let path = find_raster(&dir.join(LABELS_DIR), id)
        .ok_or_else(|| CliError::MissingArtifact(dir.join(LABELS_DIR).join(format!("{id}.png"))))?;
    Ok(read_label(path)?)
}

pub fn fuse(
    ensemble_dir: &Path,
    pop_dir: &Path,
    config: Option<&Path>,
    mode: Option<FusionMode>,
    out: &Path,
) -> Result<RunManifest> {
    let mut manifest = RunManifest::begin("fuse");
    let mut cfg: FusionConfig = read_config(config)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    let ens_taxonomy = load_taxonomy(ensemble_dir)?;
    let pop_taxonomy = load_taxonomy(pop_dir)?;
    ensure_same(
        "ensemble taxonomy",
        pop_taxonomy.to_base_only().digest(),
        ens_taxonomy.to_base_only().digest(),
    )?;
    let ids = label_ids(pop_dir)?;
    let fused: Vec<(String, LabelMap)> = ids
        .par_iter()
        .map(|id| -> Result<(String, LabelMap)> {
            let ens = read_prediction(ensemble_dir, id)?;
            let pop = read_prediction(pop_dir, id)?;
            Ok((id.clone(), ultimate_fuse(&ens, &pop, &pop_taxonomy, &cfg)?))
        })
        .collect::<Result<_>>()?;
    for (id, label) in &fused {
        write_label(out.join(LABELS_DIR).join(format!("{id}.png")), label)?;
    }
    write_json(out.join(TAXONOMY_FILE), &pop_taxonomy)?;
    manifest.config_paths.extend(config.map(Path::to_path_buf));
    manifest.config_digest = Some(canonical_digest(&cfg)?);
    manifest.inputs = vec![ensemble_dir.to_path_buf(), pop_dir.to_path_buf()];
    manifest.outputs.push(out.join(LABELS_DIR));
    manifest.finish(out)
}

pub fn evaluate(
    pred_dir: &Path,
    data_root: &Path,
    split: Split,
    policy: AbsentPolicy,
    out: &Path,
) -> Result<(RunManifest, EvalReport)> {
    let mut manifest = RunManifest::begin("evaluate");
    let data_taxonomy = load_taxonomy(data_root)?;
    let pred_taxonomy = load_taxonomy(pred_dir)?;
    // Base-only predictions are scored against the full taxonomy, where the
    // novel classes simply receive no predictions.
    if pred_taxonomy.digest() != data_taxonomy.to_base_only().digest() {
        ensure_same("prediction taxonomy", data_taxonomy.digest(), pred_taxonomy.digest())?;
    }
    let set = load_split(data_root, split, &data_taxonomy)?;
    let k = data_taxonomy.num_classes();
    let mut cm = ConfusionMatrix::new(k);
    for tile in set.iter() {
        let pred = read_prediction(pred_dir, &tile.id)?;
        cm.accumulate(&pred, tile.require_label()?)?;
    }
    let report = build_report(&cm, &data_taxonomy, policy)?;
    write_json(out.join(REPORT_FILE), &report)?;
    manifest.inputs = vec![pred_dir.to_path_buf(), data_root.join(split.to_string())];
    manifest.outputs.push(out.join(REPORT_FILE));
    Ok((manifest.finish(out)?, report))
}

pub fn plot(report: &Path, out: &Path) -> Result<RunManifest> {
    let mut manifest = RunManifest::begin("plot");
    if !report.is_file() {
        return Err(CliError::MissingArtifact(report.to_path_buf()));
    }
    let rep: EvalReport = read_json(report)?;
    let outputs = plot::render_report(&rep, out)?;
    manifest.inputs.push(report.to_path_buf());
    manifest.outputs = outputs;
    manifest.finish(out)
}
