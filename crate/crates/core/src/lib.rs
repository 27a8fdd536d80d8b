//! Core of the SegLand generalized few-shot land-cover segmentation toolkit:
//! shared domain types, dataset preparation, evaluation and decision fusion.

pub mod bank;
pub mod checkpoint;
pub mod data;
pub mod digest;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod raster;
pub mod taxonomy;

pub use bank::PrototypeBank;
pub use checkpoint::{Checkpoint, CheckpointPhase, NamedTensors, TensorData};
pub use error::{Error, Result};
pub use raster::{Image, LabelMap, Mask, ProbabilityMap, Tile};
pub use taxonomy::{validate_taxonomy, ClassTaxonomy, TaxonomyPhase};

/// Label value excluded from losses and metrics.
pub const IGNORE: u8 = 255;
