//! Two-phase training: base-class learning of the whole network, then
//! novel-class updating with a frozen extractor and frozen base prototypes.

use std::collections::BTreeMap;

use candle_core::{backprop::GradStore, DType, Device, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segland_core::data::{
    augment_geometric, compute_class_frequencies, compute_class_weights, novel_cutmix, FrequencyTable,
    Placement, TileSet, WeightMode,
};
use segland_core::digest::canonical_digest;
use segland_core::{
    Checkpoint, CheckpointPhase, ClassTaxonomy, LabelMap, PrototypeBank, TaxonomyPhase, Tile, IGNORE,
};
use serde::{Deserialize, Serialize};

use crate::encoder::is_registered;
use crate::error::{Error, Result};
use crate::network::{images_to_tensor, ModelConfig, SegModel, INPUT_MULTIPLE};
use crate::params::normal_vec;
use crate::pop::{orthogonality_loss, orthonormal_basis, score_classes, PopScorer};

/// Class weighting of the segmentation loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossWeighting {
    None,
    Inverse,
    #[default]
    InverseSqrt,
}

impl LossWeighting {
    pub fn mode(self) -> Option<WeightMode> {
        match self {
            LossWeighting::None => None,
            LossWeighting::Inverse => Some(WeightMode::Inverse),
            LossWeighting::InverseSqrt => Some(WeightMode::InverseSqrt),
        }
    }
}

/// Flat training configuration; its canonical JSON digest identifies a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// λ, the weight of the orthogonality penalty.
    pub ortho_weight: f64,
    pub weight_mode: LossWeighting,
    pub seed: u64,
    /// Square crop side for base-phase augmentation.
    pub crop: usize,
    pub flip_prob: f64,
    /// NovelCutMix samples generated per support tile in the novel phase.
    pub cutmix_copies: usize,
    pub placement: Placement,
    pub arch: String,
    pub decoder_width: usize,
    pub embed_dim: usize,
    pub temperature: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 4,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            ortho_weight: 1.0,
            weight_mode: LossWeighting::InverseSqrt,
            seed: 0,
            crop: 64,
            flip_prob: 0.5,
            cutmix_copies: 4,
            placement: Placement::Aligned,
            arch: "ref".into(),
            decoder_width: 64,
            embed_dim: 64,
            temperature: 0.1,
        }
    }
}

impl TrainConfig {
    /// Defaults for novel-class updating: many short epochs over the small
    /// support pool, with a larger step since only prototype rows move.
    pub fn novel_default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            learning_rate: 0.1,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if !(self.ortho_weight >= 0.0 && self.ortho_weight.is_finite()) {
            return bad("ortho_weight must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad("flip_prob must lie in [0, 1]");
        }
        if self.crop == 0 || self.crop % INPUT_MULTIPLE != 0 {
            return bad("crop must be a positive multiple of 32");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if self.embed_dim == 0 || self.decoder_width == 0 {
            return bad("embed_dim and decoder_width must be positive");
        }
        if !is_registered(&self.arch) {
            return Err(Error::UnknownArch(self.arch.clone()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            arch: self.arch.clone(),
            decoder_width: self.decoder_width,
            embed_dim: self.embed_dim,
        }
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> Result<String> {
        Ok(canonical_digest(self)?)
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        serde_json::to_value(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        serde_json::from_value(value.clone()).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

/// Class-weighted cross-entropy averaged over non-ignored pixels.
///
/// `logits` is `(N, K, H, W)`; `truth` holds one label map per image and
/// `weights` one weight per class index. Ignored pixels carry zero weight, so
/// they contribute neither value nor gradient.
pub fn segmentation_loss(logits: &Tensor, truth: &[&LabelMap], weights: &[f64]) -> Result<Tensor> {
    let (n, k, h, w) = logits.dims4()?;
    if truth.len() != n || weights.len() != k {
        return Err(Error::Shape(format!(
            "{} label maps and {} weights for logits {n}×{k}×{h}×{w}",
            truth.len(),
            weights.len()
        )));
    }
    let hw = h * w;
    let mut target = vec![0.0f64; n * k * hw];
    let mut count = 0usize;
    for (i, y) in truth.iter().enumerate() {
        if y.dims() != (h, w) {
            return Err(Error::Shape(format!("label {:?} vs logits {h}×{w}", y.dims())));
        }
        for (p, &id) in y.data.iter().enumerate() {
            if id == IGNORE {
                continue;
            }
            if id as usize >= k {
                return Err(Error::Shape(format!("label id {id} outside {k} classes")));
            }
            target[(i * k + id as usize) * hw + p] = weights[id as usize];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::AllIgnored);
    }
    let target = Tensor::from_vec(target, (n, k, h, w), logits.device())?.to_dtype(logits.dtype())?;
    let shifted = logits.broadcast_sub(&logits.max_keepdim(1)?.detach())?;
    let log_z = shifted.exp()?.sum_keepdim(1)?.log()?;
    let log_p = shifted.broadcast_sub(&log_z)?;
    Ok(((target * log_p)?.sum_all()? / -(count as f64))?)
}

/// SGD with heavy-ball momentum and optional L2 decay.
struct Sgd {
    vars: Vec<Var>,
    velocity: Vec<Option<Tensor>>,
    momentum: f64,
    weight_decay: f64,
}

impl Sgd {
    fn new(vars: Vec<Var>, momentum: f64, weight_decay: f64) -> Self {
        let velocity = vec![None; vars.len()];
        Sgd {
            vars,
            velocity,
            momentum,
            weight_decay,
        }
    }

    fn step(&mut self, grads: &GradStore, lr: f64) -> Result<()> {
        for (var, vel) in self.vars.iter().zip(self.velocity.iter_mut()) {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let mut g = g.detach();
            if self.weight_decay > 0.0 {
                g = (g + (var.as_tensor().detach() * self.weight_decay)?)?;
            }
            let v = match vel.take() {
                Some(old) => ((old * self.momentum)? + g)?,
                None => g,
            };
            var.set(&(var.as_tensor().detach() - (&v * lr)?)?)?;
            *vel = Some(v);
        }
        Ok(())
    }
}

/// Cosine decay from `base` to 0 over `total` steps.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    0.5 * base * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
}

/// `rows × dim` matrix with orthonormal rows drawn from the seeded stream.
pub fn random_orthonormal(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Result<Vec<f32>> {
    if rows > dim {
        return Err(Error::InvalidConfig(format!(
            "{rows} prototypes cannot be mutually orthogonal in {dim} dimensions"
        )));
    }
    loop {
        let raw: Vec<f64> = normal_vec(rng, rows * dim, 1.0).into_iter().map(f64::from).collect();
        let q = orthonormal_basis(&raw, dim)?;
        if q.len() == rows * dim {
            return Ok(q.into_iter().map(|v| v as f32).collect());
        }
    }
}

fn loss_weights(
    set: &TileSet,
    taxonomy: &ClassTaxonomy,
    weighting: LossWeighting,
) -> Result<Vec<f64>> {
    let k = taxonomy.num_classes();
    match weighting.mode() {
        None => Ok(vec![1.0; k]),
        Some(mode) => {
            let freqs = compute_class_frequencies(set, taxonomy)?;
            Ok(compute_class_weights(&freqs, mode)?.dense(k))
        }
    }
}

fn tensor_to_f32(t: &Tensor) -> Result<Vec<f32>> {
    Ok(t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?)
}

fn batches(rng: &mut ChaCha8Rng, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Phase 1: trains encoder, decoder and the background + base prototypes.
pub fn train_base_phase(train_set: &TileSet, taxonomy: &ClassTaxonomy, config: &TrainConfig) -> Result<Checkpoint> {
    config.validate()?;
    taxonomy.validate()?;
    if taxonomy.phase != TaxonomyPhase::BaseOnly {
        return Err(Error::Phase(format!("base training needs a base-only taxonomy, got {}", taxonomy.phase)));
    }
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for tile in train_set.iter() {
        let label = tile.require_label()?;
        if let Some(&id) = label.data.iter().find(|&&v| v != IGNORE && !taxonomy.contains(v)) {
            return Err(Error::NovelIdInBaseSet(id));
        }
        let (h, w) = tile.dims();
        if config.crop > h || config.crop > w {
            return Err(Error::InvalidConfig(format!(
                "crop {} exceeds tile `{}` of {h}×{w}",
                config.crop, tile.id
            )));
        }
    }

    let device = Device::Cpu;
    let k = taxonomy.num_classes();
    let weights = loss_weights(train_set, taxonomy, config.weight_mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = SegModel::new(&config.model_config(), &mut rng, &device)?;
    let bank_init = random_orthonormal(&mut rng, k, config.embed_dim)?;
    let bank = Var::from_tensor(&Tensor::from_vec(bank_init, (k, config.embed_dim), &device)?)?;

    let mut vars = model.trainable_vars();
    vars.push(bank.clone());
    let mut opt = Sgd::new(vars, config.momentum, config.weight_decay);
    let steps_per_epoch = train_set.len().div_ceil(config.batch_size);
    let total = steps_per_epoch * config.epochs;
    let crop = (config.crop, config.crop);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        for batch in batches(&mut rng, train_set.len(), config.batch_size) {
            let tiles = batch
                .iter()
                .map(|&i| augment_geometric(&train_set.tiles[i], &mut rng, crop, config.flip_prob))
                .collect::<segland_core::Result<Vec<Tile>>>()?;
            let images: Vec<_> = tiles.iter().map(|t| &t.image).collect();
            let labels = tiles.iter().map(|t| t.require_label()).collect::<segland_core::Result<Vec<_>>>()?;
            let features = model.forward(&images_to_tensor(&images, &device)?)?;
            let logits = score_classes(&features, bank.as_tensor(), config.temperature)?;
            let mut loss = segmentation_loss(&logits, &labels, &weights)?;
            if config.ortho_weight > 0.0 {
                loss = (loss + (orthogonality_loss(bank.as_tensor())? * config.ortho_weight)?)?;
            }
            epoch_loss += loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            let grads = loss.backward()?;
            opt.step(&grads, cosine_lr(config.learning_rate, step, total))?;
            step += 1;
        }
        log::info!("base epoch {}/{}: loss {:.4}", epoch + 1, config.epochs, epoch_loss / steps_per_epoch as f64);
    }

    let prototypes = tensor_to_f32(bank.as_tensor())?;
    let checkpoint = Checkpoint {
        encoder: model.encoder_params()?,
        decoder: model.decoder_params()?,
        bank: PrototypeBank::new(config.embed_dim, prototypes, vec![false; k], config.temperature as f32)?,
        taxonomy: taxonomy.clone(),
        phase: CheckpointPhase::Base,
        config_digest: config.digest()?,
        parent_digest: None,
        config: config.to_json()?,
    };
    checkpoint.validate()?;
    Ok(checkpoint)
}

/// Label used for novel-phase training: background becomes ignore.
fn ignore_background(label: &LabelMap, background: u8) -> LabelMap {
    LabelMap {
        height: label.height,
        width: label.width,
        data: label.data.iter().map(|&v| if v == background { IGNORE } else { v }).collect(),
    }
}

/// Novel ids where the pasted label has them, the host label elsewhere.
fn composite_target(pasted: &LabelMap, host: &LabelMap) -> LabelMap {
    LabelMap {
        height: pasted.height,
        width: pasted.width,
        data: pasted.data.iter().zip(&host.data).map(|(&p, &h)| if p > 0 { p } else { h }).collect(),
    }
}

/// Phase 2: appends and trains one prototype per novel class.
///
/// The encoder, decoder and base prototypes are frozen; only the background
/// row and the new rows learn. Support background pixels are ignored. When
/// `backgrounds` (labeled base-training tiles) is given, each support tile
/// also yields `cutmix_copies` NovelCutMix composites on randomly drawn hosts.
pub fn update_novel_phase(
    base: &Checkpoint,
    support: &TileSet,
    taxonomy: &ClassTaxonomy,
    config: &TrainConfig,
    backgrounds: Option<&TileSet>,
) -> Result<Checkpoint> {
    config.validate()?;
    taxonomy.validate()?;
    if base.phase != CheckpointPhase::Base {
        return Err(Error::Phase(format!("novel update needs a base checkpoint, got {}", base.phase)));
    }
    let num_base = base.taxonomy.base_ids.len();
    if taxonomy.base_ids.len() != num_base || taxonomy.novel_ids.is_empty() {
        return Err(Error::Phase(format!(
            "taxonomy with {} base and {} novel classes does not extend the checkpoint's {num_base} base classes",
            taxonomy.base_ids.len(),
            taxonomy.novel_ids.len()
        )));
    }
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    for tile in support.iter() {
        let label = tile.require_label()?;
        if let Some(&id) = label
            .data
            .iter()
            .find(|&&v| v != IGNORE && v != taxonomy.background_id && !taxonomy.is_novel(v))
        {
            return Err(Error::UnknownNovelId(id));
        }
    }

    let device = Device::Cpu;
    let base_config = TrainConfig::from_json(&base.config)?;
    // The architecture and scoring temperature are inherited from the base run.
    let config = &TrainConfig {
        arch: base_config.arch.clone(),
        decoder_width: base_config.decoder_width,
        embed_dim: base_config.embed_dim,
        temperature: base_config.temperature,
        ..config.clone()
    };
    let model = SegModel::from_params(&base_config.model_config(), &base.encoder, &base.decoder, false, &device)?;
    let dim = base.bank.dim;
    let known = 1 + num_base;
    let num_novel = taxonomy.novel_ids.len();
    let k = known + num_novel;
    let temperature = base.bank.temperature as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Sample pool: raw support tiles with background ignored, then NovelCutMix
    // composites. Outside the pasted mask a composite shows its host tile
    // verbatim, so the host's base labels supervise those pixels.
    let mut pool: Vec<Tile> = support.tiles.clone();
    let mut labels: Vec<LabelMap> = support
        .iter()
        .map(|t| t.require_label().map(|l| ignore_background(l, taxonomy.background_id)))
        .collect::<segland_core::Result<_>>()?;
    if let Some(hosts) = backgrounds.filter(|b| !b.is_empty()) {
        for tile in support.iter() {
            for _ in 0..config.cutmix_copies {
                let host = &hosts.tiles[rng.random_range(0..hosts.len())];
                let host_label = host.require_label()?;
                if let Some(&id) = host_label.data.iter().find(|&&v| v != IGNORE && v as usize >= known) {
                    return Err(Error::NovelIdInBaseSet(id));
                }
                let mixed = novel_cutmix(host, tile, config.placement, &mut rng)?;
                labels.push(composite_target(mixed.require_label()?, host_label));
                pool.push(mixed);
            }
        }
    }

    // Class weights over the phase-2 training targets.
    let weights = match config.weight_mode.mode() {
        None => vec![1.0; k],
        Some(mode) => {
            let mut counts: BTreeMap<u8, u64> = BTreeMap::new();
            for l in &labels {
                for &v in l.data.iter().filter(|&&v| v != IGNORE) {
                    *counts.entry(v).or_default() += 1;
                }
            }
            if counts.is_empty() {
                return Err(Error::EmptySupport);
            }
            compute_class_weights(&FrequencyTable::from_counts(counts)?, mode)?.dense(k)
        }
    };

    // The extractor is frozen, so unit features and residuals are computed once.
    let base_bank = Tensor::from_vec(base.bank.prototypes.clone(), (known, dim), &device)?;
    let scorer = PopScorer::new(
        &Tensor::cat(&[&base_bank, &Tensor::zeros((1, dim), DType::F32, &device)?], 0)?,
        num_base,
        temperature,
    )?;
    let mut units = Vec::with_capacity(pool.len());
    let mut residuals = Vec::with_capacity(pool.len());
    for chunk in pool.chunks(config.batch_size) {
        let images: Vec<_> = chunk.iter().map(|t| &t.image).collect();
        let features = model.extract_features(&images)?;
        let (unit, residual) = scorer.prepare(&features)?;
        for i in 0..chunk.len() {
            units.push(unit.narrow(0, i, 1)?);
            residuals.push(residual.narrow(0, i, 1)?);
        }
    }

    // Novel rows start at the masked mean of residual features.
    let mut novel_init = Vec::with_capacity(num_novel * dim);
    for &id in &taxonomy.novel_ids {
        let mut sum = vec![0.0f64; dim];
        let mut pixels = 0usize;
        for (label, residual) in labels.iter().zip(&residuals) {
            let r = residual.squeeze(0)?.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
            let hw = label.data.len();
            for (p, _) in label.data.iter().enumerate().filter(|(_, &v)| v == id) {
                for (d, s) in sum.iter_mut().enumerate() {
                    *s += r[d * hw + p];
                }
                pixels += 1;
            }
        }
        let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
        let row = if pixels > 0 && norm > 1e-8 {
            sum.iter().map(|v| v / norm).collect()
        } else {
            random_residual_direction(&mut rng, &base.bank.prototypes[dim..known * dim], dim)?
        };
        novel_init.extend(row.into_iter().map(|v| v as f32));
    }

    let background = Var::from_tensor(&base_bank.narrow(0, 0, 1)?)?;
    let frozen_base = base_bank.narrow(0, 1, num_base)?;
    let novel = Var::from_tensor(&Tensor::from_vec(novel_init, (num_novel, dim), &device)?)?;
    let bank = |bg: &Var, nv: &Var| Tensor::cat(&[bg.as_tensor(), &frozen_base, nv.as_tensor()], 0);

    let mut opt = Sgd::new(vec![background.clone(), novel.clone()], config.momentum, config.weight_decay);
    let steps_per_epoch = pool.len().div_ceil(config.batch_size);
    let total = steps_per_epoch * config.epochs;
    let mut step = 0;
    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        let mut counted = 0usize;
        for batch in batches(&mut rng, pool.len(), config.batch_size) {
            let batch_labels: Vec<&LabelMap> = batch.iter().map(|&i| &labels[i]).collect();
            if batch_labels.iter().all(|l| l.data.iter().all(|&v| v == IGNORE)) {
                step += 1;
                continue;
            }
            let unit = Tensor::cat(&batch.iter().map(|&i| &units[i]).collect::<Vec<_>>(), 0)?;
            let residual = Tensor::cat(&batch.iter().map(|&i| &residuals[i]).collect::<Vec<_>>(), 0)?;
            let full = bank(&background, &novel)?;
            let logits = scorer.logits_prepared(&unit, &residual, &full)?;
            let mut loss = segmentation_loss(&logits, &batch_labels, &weights)?;
            if config.ortho_weight > 0.0 {
                loss = (loss + (orthogonality_loss(&full)? * config.ortho_weight)?)?;
            }
            epoch_loss += loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            counted += 1;
            let grads = loss.backward()?;
            opt.step(&grads, cosine_lr(config.learning_rate, step, total))?;
            step += 1;
        }
        log::debug!(
            "novel epoch {}/{}: loss {:.4}",
            epoch + 1,
            config.epochs,
            epoch_loss / counted.max(1) as f64
        );
    }

    let mut prototypes = tensor_to_f32(background.as_tensor())?;
    prototypes.extend_from_slice(&base.bank.prototypes[dim..known * dim]);
    prototypes.extend(tensor_to_f32(novel.as_tensor())?);
    let mut frozen = vec![false; k];
    frozen[1..known].iter_mut().for_each(|f| *f = true);
    let checkpoint = Checkpoint {
        encoder: base.encoder.clone(),
        decoder: base.decoder.clone(),
        bank: PrototypeBank::new(dim, prototypes, frozen, base.bank.temperature)?,
        taxonomy: taxonomy.clone(),
        phase: CheckpointPhase::Novel,
        config_digest: config.digest()?,
        parent_digest: Some(base.config_digest.clone()),
        config: config.to_json()?,
    };
    checkpoint.validate()?;
    Ok(checkpoint)
}

/// Random unit vector orthogonal to the span of `base_rows`.
fn random_residual_direction(rng: &mut ChaCha8Rng, base_rows: &[f32], dim: usize) -> Result<Vec<f64>> {
    let rows: Vec<f64> = base_rows.iter().map(|&v| v as f64).collect();
    let q = orthonormal_basis(&rows, dim)?;
    loop {
        let mut v: Vec<f64> = normal_vec(rng, dim, 1.0).into_iter().map(f64::from).collect();
        for b in q.chunks(dim) {
            let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return Ok(v.into_iter().map(|x| x / norm).collect());
        }
        if q.len() >= dim * dim {
            return Err(Error::InvalidConfig("base prototypes span the whole embedding".into()));
        }
    }
}
