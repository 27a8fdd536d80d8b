use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] segland_core::Error),
    #[error("tensor op: {0}")]
    Candle(#[from] candle_core::Error),

    #[error("shape: {0}")]
    Shape(String),
    #[error("feature width {features} does not match prototype width {prototypes}")]
    DimensionMismatch { features: usize, prototypes: usize },
    #[error("base prototype {0} has (near) zero norm")]
    DegenerateBasis(usize),
    #[error("prototype {0} has zero norm")]
    Degenerate(usize),
    #[error("orthogonality loss needs at least two prototypes, got {0}")]
    TooFewPrototypes(usize),

    #[error("every pixel is ignored")]
    AllIgnored,
    #[error("base training set contains class id {0} outside background and base classes")]
    NovelIdInBaseSet(u8),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("support set contains class id {0} that is neither background nor a novel class")]
    UnknownNovelId(u8),
    #[error("support set is empty")]
    EmptySupport,
    #[error("phase: {0}")]
    Phase(String),
    #[error("unknown encoder architecture `{0}`")]
    UnknownArch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
}
