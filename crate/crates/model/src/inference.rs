//! Checkpoint-driven prediction.

use candle_core::{Device, Tensor};
use segland_core::{Checkpoint, Image, LabelMap, ProbabilityMap};

use crate::error::Result;
use crate::network::SegModel;
use crate::pop::{predict, PopScorer};
use crate::training::TrainConfig;

/// Frozen model plus prototype bank, ready to label images.
pub struct Predictor {
    model: SegModel,
    bank: Tensor,
    scorer: PopScorer,
}

impl Predictor {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.validate()?;
        let device = Device::Cpu;
        let config = TrainConfig::from_json(&ckpt.config)?;
        let model = SegModel::from_params(&config.model_config(), &ckpt.encoder, &ckpt.decoder, false, &device)?;
        let bank = Tensor::from_vec(ckpt.bank.prototypes.clone(), (ckpt.bank.rows(), ckpt.bank.dim), &device)?;
        let scorer = PopScorer::new(&bank, ckpt.taxonomy.base_ids.len(), ckpt.bank.temperature as f64)?;
        Ok(Predictor { model, bank, scorer })
    }

    /// `(N, K, H, W)` logits for a batch of equally sized images.
    pub fn logits(&self, images: &[&Image]) -> Result<Tensor> {
        let features = self.model.extract_features(images)?;
        self.scorer.logits(&features, &self.bank)
    }

    pub fn predict(&self, images: &[&Image]) -> Result<Vec<(ProbabilityMap, LabelMap)>> {
        predict(&self.logits(images)?)
    }
}
