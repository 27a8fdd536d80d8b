//! Checkpoint container: a directory with `tensors.safetensors` (little-endian
//! f32 named tensors) and `meta.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use crate::bank::{BankMeta, PrototypeBank};
use crate::error::{Error, Result};
use crate::taxonomy::ClassTaxonomy;

pub const TENSORS_FILE: &str = "tensors.safetensors";
pub const META_FILE: &str = "meta.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorData {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "tensor of shape {shape:?} given {} values",
                data.len()
            )));
        }
        Ok(TensorData { shape, data })
    }

    fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Parameter tree keyed by dotted names.
pub type NamedTensors = BTreeMap<String, TensorData>;

/// Which training phase produced a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointPhase {
    Base,
    Novel,
}

impl std::fmt::Display for CheckpointPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CheckpointPhase::Base => "base",
            CheckpointPhase::Novel => "novel",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: NamedTensors,
    pub decoder: NamedTensors,
    pub bank: PrototypeBank,
    pub taxonomy: ClassTaxonomy,
    pub phase: CheckpointPhase,
    /// Digest of the training configuration that produced this checkpoint.
    pub config_digest: String,
    /// For novel-phase checkpoints, the `config_digest` of the base checkpoint.
    pub parent_digest: Option<String>,
    /// The training configuration itself, as a JSON document.
    pub config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    phase: CheckpointPhase,
    taxonomy: ClassTaxonomy,
    dim: usize,
    temperature: f32,
    config_digest: String,
    #[serde(default)]
    parent_digest: Option<String>,
    bank: BankMeta,
    config: serde_json::Value,
}

const ENCODER_PREFIX: &str = "encoder.";
const DECODER_PREFIX: &str = "decoder.";
const BANK_TENSOR: &str = "bank.prototypes";

impl Checkpoint {
    /// Structural checks: bank shape against the taxonomy and the phase/parent link.
    pub fn validate(&self) -> Result<()> {
        self.bank.validate()?;
        self.taxonomy.validate()?;
        if self.bank.rows() != self.taxonomy.num_classes() {
            return Err(Error::InvalidBank(format!(
                "{} prototype rows for {} classes",
                self.bank.rows(),
                self.taxonomy.num_classes()
            )));
        }
        if self.phase == CheckpointPhase::Novel && self.parent_digest.is_none() {
            return Err(Error::Format(
                "novel-phase checkpoint without a parent digest".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.validate()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let bank = TensorData::new(vec![self.bank.rows(), self.bank.dim], self.bank.prototypes.clone())?;
        let mut owned: Vec<(String, TensorData)> = Vec::new();
        for (name, t) in &self.encoder {
            owned.push((format!("{ENCODER_PREFIX}{name}"), t.clone()));
        }
        for (name, t) in &self.decoder {
            owned.push((format!("{DECODER_PREFIX}{name}"), t.clone()));
        }
        owned.push((BANK_TENSOR.to_string(), bank));
        let bytes: Vec<(String, Vec<u8>, Vec<usize>)> = owned
            .into_iter()
            .map(|(n, t)| (n, t.to_le_bytes(), t.shape))
            .collect();
        let views = bytes
            .iter()
            .map(|(n, b, s)| {
                TensorView::new(Dtype::F32, s.clone(), b)
                    .map(|v| (n.clone(), v))
                    .map_err(|e| Error::Archive(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let archive =
            safetensors::serialize(views, None).map_err(|e| Error::Archive(e.to_string()))?;
        let tensors_path = dir.join(TENSORS_FILE);
        fs::write(&tensors_path, archive).map_err(|e| Error::io(&tensors_path, e))?;

        let meta = Meta {
            format_version: FORMAT_VERSION,
            phase: self.phase,
            taxonomy: self.taxonomy.clone(),
            dim: self.bank.dim,
            temperature: self.bank.temperature,
            config_digest: self.config_digest.clone(),
            parent_digest: self.parent_digest.clone(),
            bank: self.bank.meta(),
            config: self.config.clone(),
        };
        let meta_path = dir.join(META_FILE);
        let mut text = serde_json::to_string_pretty(&meta)?;
        text.push('\n');
        fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: Meta = serde_json::from_str(&text)?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint format version {}",
                meta.format_version
            )));
        }

        let tensors_path = dir.join(TENSORS_FILE);
        let bytes = fs::read(&tensors_path).map_err(|e| Error::io(&tensors_path, e))?;
        let archive =
            SafeTensors::deserialize(&bytes).map_err(|e| Error::Archive(e.to_string()))?;
        let mut encoder = NamedTensors::new();
        let mut decoder = NamedTensors::new();
        let mut prototypes = None;
        for (name, view) in archive.tensors() {
            if view.dtype() != Dtype::F32 {
                return Err(Error::Archive(format!("tensor `{name}` is not f32")));
            }
            let data: Vec<f32> = view
                .data()
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            let t = TensorData::new(view.shape().to_vec(), data)?;
            if let Some(rest) = name.strip_prefix(ENCODER_PREFIX) {
                encoder.insert(rest.to_string(), t);
            } else if let Some(rest) = name.strip_prefix(DECODER_PREFIX) {
                decoder.insert(rest.to_string(), t);
            } else if name == BANK_TENSOR {
                prototypes = Some(t);
            } else {
                return Err(Error::Archive(format!("unexpected tensor `{name}`")));
            }
        }
        let prototypes =
            prototypes.ok_or_else(|| Error::Archive(format!("missing `{BANK_TENSOR}`")))?;
        if prototypes.shape != [meta.bank.rows, meta.dim] {
            return Err(Error::Archive(format!(
                "bank tensor shape {:?} disagrees with metadata",
                prototypes.shape
            )));
        }
        let bank = PrototypeBank::new(meta.dim, prototypes.data, meta.bank.frozen, meta.temperature)?;
        let ckpt = Checkpoint {
            encoder,
            decoder,
            bank,
            taxonomy: meta.taxonomy,
            phase: meta.phase,
            config_digest: meta.config_digest,
            parent_digest: meta.parent_digest,
            config: meta.config,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }
}
