//! Sectoral optic disc pallor measurement for colour fundus photographs.
//!
//! The pipeline takes a full-size fundus image plus segmentation inputs (disc
//! mask, vessel mask, fovea location) from a pluggable [`providers`]
//! implementation and produces a [`PallorRecord`]: green/red intensity ratios
//! inside a 30 px band along the disc margin, normalized by the same ratio in
//! the background retina at the border of a 650×650 crop, split into the six
//! Spectralis peripapillary sectors plus the papillomacular bundle.
//!
//! Numerical code (statistics, geometry, metrics) is generic over the
//! floating-point type through [`Scalar`]; the aliases at the crate root fix
//! it to `f64`, which is what the pipeline itself uses.
//!
//! ```no_run
//! use disc_pallor::{pipeline, providers::MaskFileProvider, PipelineConfig};
//!
//! let entries = disc_pallor::imgio::read_manifest("manifest.csv".as_ref())?;
//! let cfg = PipelineConfig::default();
//! for entry in &entries {
//!     let out = pipeline::process_entry(entry, &MaskFileProvider, &cfg);
//!     println!("{} {:?}", out.record.image_id, out.record.pallor_global);
//! }
//! # Ok::<(), disc_pallor::Error>(())
//! ```

pub mod batch;
pub mod config;
pub mod error;
pub mod evalmetrics;
pub mod geometry;
pub mod imgio;
pub mod maskops;
pub mod overlay;
pub mod pallor;
pub mod pipeline;
pub mod preprocess;
pub mod providers;
pub mod quality;
pub mod raster;
pub mod regions;
pub mod scalar;
pub mod synth;
pub mod types;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use raster::{BinaryMask, FundusImage, GrayImage, Raster, Rgb};
pub use scalar::Scalar;
pub use types::{IoPvRecord, Laterality, PallorRecord, PointPx, Status, Zone};

/// Pixel coordinate in double precision.
pub type Point = types::PointPx<f64>;
/// Moments-based ellipse in double precision.
pub type Ellipse = types::EllipseFit<f64>;
/// Per-region channel statistics in double precision.
pub type Stats = pallor::ChannelStats<f64>;
/// Real-valued greyscale raster in double precision.
pub type Gray = raster::GrayImage<f64>;
