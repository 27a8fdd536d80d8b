//! Encoder + decoder feature extractor.

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use segland_core::{Image, NamedTensors};
use serde::{Deserialize, Serialize};

use crate::decoder::UperNetPlus;
use crate::encoder::{build_encoder, Encoder};
use crate::error::{Error, Result};
use crate::params::ParamStore;

/// Input height and width must be multiples of the coarsest stride.
pub const INPUT_MULTIPLE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: String,
    pub decoder_width: usize,
    pub embed_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: "ref".into(),
            decoder_width: 64,
            embed_dim: 64,
        }
    }
}

pub struct SegModel {
    pub config: ModelConfig,
    encoder: Box<dyn Encoder>,
    decoder: UperNetPlus,
    encoder_store: ParamStore,
    decoder_store: ParamStore,
}

impl SegModel {
    /// Freshly initialized, trainable model.
    pub fn new(config: &ModelConfig, rng: &mut ChaCha8Rng, device: &Device) -> Result<Self> {
        let mut encoder_store = ParamStore::new_trainable(device);
        let mut decoder_store = ParamStore::new_trainable(device);
        let encoder = build_encoder(&config.arch, &mut encoder_store, rng)?;
        let decoder = UperNetPlus::new(
            &mut decoder_store,
            rng,
            encoder.widths(),
            config.decoder_width,
            config.embed_dim,
        )?;
        Ok(SegModel {
            config: config.clone(),
            encoder,
            decoder,
            encoder_store,
            decoder_store,
        })
    }

    /// Rebuilds a model from stored parameters. A frozen model holds plain
    /// tensors that never receive gradients.
    pub fn from_params(
        config: &ModelConfig,
        encoder_params: &NamedTensors,
        decoder_params: &NamedTensors,
        trainable: bool,
        device: &Device,
    ) -> Result<Self> {
        let mut encoder_store = ParamStore::from_named(encoder_params, "", trainable, device)?;
        let mut decoder_store = ParamStore::from_named(decoder_params, "", trainable, device)?;
        // Construction only looks parameters up; the stream is never drawn from
        // for names that already exist.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let encoder = build_encoder(&config.arch, &mut encoder_store, &mut rng)?;
        let decoder = UperNetPlus::new(
            &mut decoder_store,
            &mut rng,
            encoder.widths(),
            config.decoder_width,
            config.embed_dim,
        )?;
        for (store, given, what) in [
            (&encoder_store, encoder_params, "encoder"),
            (&decoder_store, decoder_params, "decoder"),
        ] {
            if store.len() != given.len() {
                return Err(Error::Shape(format!(
                    "{what} parameters: {} stored, architecture uses {}",
                    given.len(),
                    store.len()
                )));
            }
        }
        Ok(SegModel {
            config: config.clone(),
            encoder,
            decoder,
            encoder_store,
            decoder_store,
        })
    }

    pub fn device(&self) -> &Device {
        self.encoder_store.device()
    }

    pub fn embed_dim(&self) -> usize {
        self.decoder.embed_dim()
    }

    pub fn trainable_vars(&self) -> Vec<candle_core::Var> {
        self.encoder_store
            .vars()
            .chain(self.decoder_store.vars())
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn encoder_params(&self) -> Result<NamedTensors> {
        self.encoder_store.export("")
    }

    pub fn decoder_params(&self) -> Result<NamedTensors> {
        self.decoder_store.export("")
    }

    /// `(N, 3, H, W)` normalized batch → `(N, D, H, W)` features.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        if c != 3 || h % INPUT_MULTIPLE != 0 || w % INPUT_MULTIPLE != 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "input {c}×{h}×{w}: need 3 channels and sides divisible by {INPUT_MULTIPLE}"
            )));
        }
        self.decoder.forward(&self.encoder.forward(x)?)
    }

    pub fn extract_features(&self, images: &[&Image]) -> Result<Tensor> {
        self.forward(&images_to_tensor(images, self.device())?)
    }
}

/// Stacks same-sized images into a normalized `(N, 3, H, W)` f32 batch,
/// mapping intensities to `(v/255 − 0.5) / 0.25`.
pub fn images_to_tensor(images: &[&Image], device: &Device) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::Shape("empty image batch".into()))?;
    let (h, w) = first.dims();
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if img.dims() != (h, w) {
            return Err(Error::Shape(format!("batch mixes {:?} and {:?}", (h, w), img.dims())));
        }
        for c in 0..3 {
            data.extend(img.data.iter().skip(c).step_by(3).map(|&v| (v as f32 / 255.0 - 0.5) / 0.25));
        }
    }
    Ok(Tensor::from_vec(data, (images.len(), 3, h, w), device)?.to_dtype(DType::F32)?)
}
