//! Dataset ingestion, class balancing and augmentation.

mod augment;
mod balance;
mod cutmix;
mod dataset;

pub use augment::{augment_geometric, flip_horizontal, flip_vertical};
pub use balance::{compute_class_frequencies, compute_class_weights, FrequencyTable, WeightMode, WeightVector};
pub use cutmix::{build_novel_mask, novel_cutmix, Placement};
pub use dataset::{load_dataset, Split, TileSet, IMAGES_DIR, LABELS_DIR};
