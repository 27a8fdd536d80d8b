use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class prototype vectors (K×D, row order = taxonomy order) with
/// per-row freeze flags and the cosine temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    pub dim: usize,
    pub prototypes: Vec<f32>,
    pub frozen: Vec<bool>,
    pub temperature: f32,
}

/// Freeze flags and shape of a bank as written to checkpoint metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankMeta {
    pub rows: usize,
    pub dim: usize,
    pub frozen: Vec<bool>,
    pub temperature: f32,
}

impl PrototypeBank {
    pub fn new(dim: usize, prototypes: Vec<f32>, frozen: Vec<bool>, temperature: f32) -> Result<Self> {
        let bank = PrototypeBank {
            dim,
            prototypes,
            frozen,
            temperature,
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.prototypes.len() % self.dim != 0 {
            return Err(Error::InvalidBank(format!(
                "{} values do not form rows of width {}",
                self.prototypes.len(),
                self.dim
            )));
        }
        if self.frozen.len() != self.rows() {
            return Err(Error::InvalidBank(format!(
                "{} freeze flags for {} rows",
                self.frozen.len(),
                self.rows()
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidBank(format!(
                "temperature {} is not positive",
                self.temperature
            )));
        }
        if self.prototypes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBank("non-finite prototype entry".into()));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.prototypes.len() / self.dim
        }
    }

    pub fn row(&self, k: usize) -> &[f32] {
        &self.prototypes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn meta(&self) -> BankMeta {
        BankMeta {
            rows: self.rows(),
            dim: self.dim,
            frozen: self.frozen.clone(),
            temperature: self.temperature,
        }
    }
}
