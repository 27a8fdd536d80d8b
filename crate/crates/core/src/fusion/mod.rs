//! Decision-level fusion of the ensemble base-class map with the POP map.
//!
//! Order of operations:
//! 1. base/background pixels of the POP map take the ensemble label;
//! 2. each novel class is opened with the configured kernel and stripped of
//!    connected components smaller than `min_region`; pruned pixels keep the
//!    ensemble label;
//! 3. each retained novel class is closed, filling only pixels not already
//!    held by another novel class.

mod morphology;

pub use morphology::{
    connected_components, dilate, erode, morphological_close, morphological_open, remove_small_components,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{LabelMap, Mask};
use crate::taxonomy::ClassTaxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// Ensemble label wherever POP predicts background or a base class.
    #[default]
    ReplaceBase,
    /// Keep POP's base label where both maps agree, ensemble label elsewhere.
    IntersectBase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub kernel: usize,
    pub min_region: usize,
    #[serde(default)]
    pub mode: FusionMode,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            kernel: 3,
            min_region: 16,
            mode: FusionMode::ReplaceBase,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        morphology::check_kernel(self.kernel).map(|_| ())
    }
}

pub fn ultimate_fuse(
    ensemble_map: &LabelMap,
    pop_labels: &LabelMap,
    taxonomy: &ClassTaxonomy,
    config: &FusionConfig,
) -> Result<LabelMap> {
    config.validate()?;
    if ensemble_map.dims() != pop_labels.dims() {
        return Err(Error::Shape(format!(
            "ensemble map {:?} vs POP map {:?}",
            ensemble_map.dims(),
            pop_labels.dims()
        )));
    }
    if let Some(&id) = ensemble_map
        .data
        .iter()
        .find(|&&id| id != taxonomy.background_id && !taxonomy.is_base(id))
    {
        return Err(Error::ForeignId(id));
    }
    if let Some(&id) = pop_labels.data.iter().find(|&&id| !taxonomy.contains(id)) {
        return Err(Error::ForeignId(id));
    }

    let (h, w) = ensemble_map.dims();
    let mut out = ensemble_map.clone();
    for (o, &pop) in out.data.iter_mut().zip(&pop_labels.data) {
        if taxonomy.is_novel(pop) {
            continue;
        }
        *o = match config.mode {
            FusionMode::ReplaceBase => *o,
            FusionMode::IntersectBase if pop == *o => pop,
            FusionMode::IntersectBase => *o,
        };
    }

    let mut retained: Vec<Mask> = Vec::with_capacity(taxonomy.novel_ids.len());
    for &id in &taxonomy.novel_ids {
        let mask = Mask {
            height: h,
            width: w,
            data: pop_labels.data.iter().map(|&v| v == id).collect(),
        };
        let opened = morphological_open(&mask, config.kernel)?;
        retained.push(remove_small_components(&opened, config.min_region));
    }

    let mut claimed: Vec<bool> = (0..h * w).map(|p| retained.iter().any(|m| m.data[p])).collect();
    for mask in retained.iter_mut() {
        let closed = morphological_close(mask, config.kernel)?;
        for p in 0..h * w {
            if closed.data[p] && !mask.data[p] && !claimed[p] {
                mask.data[p] = true;
                claimed[p] = true;
            }
        }
    }

    for (&id, mask) in taxonomy.novel_ids.iter().zip(&retained) {
        for (o, &m) in out.data.iter_mut().zip(&mask.data) {
            if m {
                *o = id;
            }
        }
    }
    Ok(out)
}
