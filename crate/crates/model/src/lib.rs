//! Feature extraction, the orthogonal-prototype classifier, two-phase
//! training, and base-learner ensembling.

pub mod decoder;
pub mod encoder;
pub mod ensemble;
pub mod error;
pub mod inference;
pub mod network;
pub mod params;
pub mod pop;
pub mod resample;
pub mod training;

pub use error::{Error, Result};
pub use encoder::{Encoder, FeaturePyramid};
pub use ensemble::{average_fusion, train_base_learner, LearnerSpec};
pub use inference::Predictor;
pub use network::{ModelConfig, SegModel};
pub use pop::{orthogonality_loss, predict, project_residual, score_classes, PopScorer};
pub use training::{segmentation_loss, train_base_phase, update_novel_phase, LossWeighting, TrainConfig};
