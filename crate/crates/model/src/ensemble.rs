//! Independent base learners and probability averaging.

use std::path::PathBuf;

use segland_core::data::TileSet;
use segland_core::{Checkpoint, ClassTaxonomy, ProbabilityMap};
use serde::{Deserialize, Serialize};

use crate::encoder::is_registered;
use crate::error::{Error, Result};
use crate::training::{train_base_phase, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub arch_id: String,
    pub config: TrainConfig,
    /// Where the trained checkpoint is written; empty to keep it in memory only.
    #[serde(default)]
    pub checkpoint_path: PathBuf,
}

/// Trains one base learner with the learner's architecture and saves it to
/// `checkpoint_path` when one is set.
pub fn train_base_learner(spec: &LearnerSpec, train_set: &TileSet, taxonomy: &ClassTaxonomy) -> Result<Checkpoint> {
    if !is_registered(&spec.arch_id) {
        return Err(Error::UnknownArch(spec.arch_id.clone()));
    }
    let config = TrainConfig {
        arch: spec.arch_id.clone(),
        ..spec.config.clone()
    };
    let ckpt = train_base_phase(train_set, taxonomy, &config)?;
    if !spec.checkpoint_path.as_os_str().is_empty() {
        ckpt.save(&spec.checkpoint_path)?;
    }
    Ok(ckpt)
}

/// Checks that no two learners share an `(arch_id, seed)` pair.
pub fn check_distinct(specs: &[LearnerSpec]) -> Result<()> {
    for (i, a) in specs.iter().enumerate() {
        if let Some(b) = specs[..i]
            .iter()
            .find(|b| b.arch_id == a.arch_id && b.config.seed == a.config.seed)
        {
            return Err(Error::InvalidConfig(format!(
                "learners repeat arch `{}` with seed {}",
                b.arch_id, b.config.seed
            )));
        }
    }
    Ok(())
}

/// Elementwise mean of probability maps, accumulated in f64.
pub fn average_fusion(maps: &[ProbabilityMap]) -> Result<ProbabilityMap> {
    let first = maps.first().ok_or(segland_core::Error::EmptyList)?;
    if let Some(m) = maps.iter().find(|m| m.dims() != first.dims()) {
        return Err(segland_core::Error::Shape(format!("fusing {:?} with {:?}", first.dims(), m.dims())).into());
    }
    let mut acc = vec![0.0f64; first.data.len()];
    for m in maps {
        acc.iter_mut().zip(&m.data).for_each(|(a, &v)| *a += v as f64);
    }
    let n = maps.len() as f64;
    let (h, w, k) = first.dims();
    Ok(ProbabilityMap::new(h, w, k, acc.into_iter().map(|a| (a / n) as f32).collect())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(v: &[f32]) -> ProbabilityMap {
        ProbabilityMap::new(1, 1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn mean_of_two() {
        let out = average_fusion(&[pm(&[0.8, 0.2]), pm(&[0.6, 0.4])]).unwrap();
        assert!((out.data[0] - 0.7).abs() < 1e-7 && (out.data[1] - 0.3).abs() < 1e-7);
        let one = pm(&[0.25, 0.75]);
        assert_eq!(average_fusion(std::slice::from_ref(&one)).unwrap(), one);
        assert_eq!(average_fusion(&[one.clone(), one.clone(), one.clone()]).unwrap(), one);
    }

    #[test]
    fn errors() {
        assert!(matches!(average_fusion(&[]), Err(Error::Core(segland_core::Error::EmptyList))));
        assert!(matches!(
            average_fusion(&[pm(&[1.0, 0.0]), pm(&[1.0, 0.0, 0.0])]),
            Err(Error::Core(segland_core::Error::Shape(_)))
        ));
    }

    #[test]
    fn unknown_arch_and_duplicates() {
        let spec = LearnerSpec {
            arch_id: "hrnet48".into(),
            config: TrainConfig::default(),
            checkpoint_path: PathBuf::new(),
        };
        let set = TileSet::new(vec![], "", segland_core::data::Split::BaseTrain).unwrap();
        assert!(matches!(
            train_base_learner(&spec, &set, &ClassTaxonomy::base_only(3)),
            Err(Error::UnknownArch(_))
        ));
        let a = LearnerSpec {
            arch_id: "ref-tiny".into(),
            ..spec
        };
        assert!(check_distinct(&[a.clone(), a]).is_err());
    }
}
