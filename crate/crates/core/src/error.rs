use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported image format")]
    UnsupportedFormat,
    #[error("corrupt image file: {0}")]
    CorruptFile(String),
    #[error("invalid raster dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("manifest is missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("duplicate image id `{0}` in manifest")]
    DuplicateImageId(String),
    #[error("manifest row {row}: {msg}")]
    ManifestRow { row: usize, msg: String },
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("image smaller than the tile grid ({width}x{height} < {tiles}x{tiles})")]
    ImageTooSmall { width: usize, height: usize, tiles: usize },
    #[error("mask has no foreground")]
    EmptyMask,
    #[error("degenerate shape: {0}")]
    DegenerateShape(&'static str),
    #[error("points coincide")]
    CoincidentPoints,
    #[error("region is empty after exclusion")]
    DegenerateRegion,
    #[error("zero denominator in ratio")]
    DivisionDegenerate,
    #[error("zone {0} missing")]
    MissingZone(crate::Zone),
    #[error("ground truth mask is empty")]
    EmptyGroundTruth,
    #[error("empty list")]
    EmptyList,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("expected values are only defined for noise-free scenes")]
    NoiseNotSupported,

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
