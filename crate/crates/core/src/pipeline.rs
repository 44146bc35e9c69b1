//! Per-image processing: decode, preprocess, segment, crop, post-process,
//! partition, measure and gate.

use std::time::Instant;

use crate::config::PipelineConfig;
use crate::geometry::{axis_angle, crop_about, crop_at, determine_laterality, DiscGeometry};
use crate::imgio::{load_image, ManifestEntry};
use crate::maskops::{area, centroid, fill_holes, fit_ellipse, keep_largest, smooth_edges};
use crate::pallor::{compute_record, DiscShape};
use crate::preprocess::{preprocess, PreprocessedImage};
use crate::providers::SegmentationProvider;
use crate::quality::{apply_gates, Reason};
use crate::raster::{BinaryMask, FundusImage};
use crate::regions::{build_partition, ZonePartition};
use crate::types::{PallorRecord, Status};
use crate::{Ellipse, Point};

/// Intermediate products kept for overlays and inspection.
#[derive(Debug, Clone)]
pub struct Details {
    pub working: PreprocessedImage,
    /// Fovea in the working frame.
    pub fovea_working: Point,
    pub crop: FundusImage,
    /// Smoothed disc in the crop frame.
    pub disc: BinaryMask,
    pub vessels: BinaryMask,
    pub partition: ZonePartition,
    pub geometry: DiscGeometry<f64>,
    pub ellipse: Ellipse,
}

#[derive(Debug, Clone)]
pub struct ProcessOutput {
    pub record: PallorRecord,
    /// Present whenever the pipeline got as far as a measured crop.
    pub details: Option<Details>,
}

impl ProcessOutput {
    fn failed(entry: &ManifestEntry, reason: Reason, started: Instant) -> Self {
        let mut record = PallorRecord::failed(&entry.image_id, &entry.subject_id, reason.as_str());
        record.laterality = entry.expected_laterality.unwrap_or_default();
        record.proc_time_ms = elapsed_ms(started);
        Self { record, details: None }
    }
}

fn elapsed_ms(started: Instant) -> f64 {
    started.elapsed().as_secs_f64() * 1000.0
}

/// Loads the entry's image and processes it. Never panics on bad input: every
/// problem ends up as a FAILED record.
pub fn process_entry(entry: &ManifestEntry, provider: &dyn SegmentationProvider, cfg: &PipelineConfig) -> ProcessOutput {
    let started = Instant::now();
    match load_image(&entry.image_path) {
        Ok(image) => process_image_from(&image, entry, provider, cfg, started),
        Err(e) => {
            log::warn!("{}: {e}", entry.image_id);
            ProcessOutput::failed(entry, Reason::ImageUnreadable, started)
        }
    }
}

/// Processes an already decoded image.
pub fn process_image(
    image: &FundusImage,
    entry: &ManifestEntry,
    provider: &dyn SegmentationProvider,
    cfg: &PipelineConfig,
) -> ProcessOutput {
    process_image_from(image, entry, provider, cfg, Instant::now())
}

fn process_image_from(
    image: &FundusImage,
    entry: &ManifestEntry,
    provider: &dyn SegmentationProvider,
    cfg: &PipelineConfig,
    started: Instant,
) -> ProcessOutput {
    match run(image, entry, provider, cfg) {
        Ok((mut record, details)) => {
            record.proc_time_ms = elapsed_ms(started);
            ProcessOutput { record, details: Some(details) }
        }
        Err(reason) => {
            log::info!("{}: {reason}", entry.image_id);
            ProcessOutput::failed(entry, reason, started)
        }
    }
}

fn run(
    image: &FundusImage,
    entry: &ManifestEntry,
    provider: &dyn SegmentationProvider,
    cfg: &PipelineConfig,
) -> Result<(PallorRecord, Details), Reason> {
    let working = preprocess(image, cfg.border_px, cfg.target_height).map_err(|_| Reason::ImageUnreadable)?;
    let seg = provider.provide(&working, entry).map_err(|f| f.reason())?;
    if seg.disc_mask.dims() != working.image.dims() || seg.vessel_mask.dims() != working.image.dims() {
        return Err(Reason::DimensionMismatch);
    }
    if !seg.fovea.is_finite() {
        return Err(Reason::FoveaNotFound);
    }

    // Crop about the full-frame disc.
    let disc_full = keep_largest(&seg.disc_mask).map_err(|_| Reason::DiscNotFound)?;
    let c_full: Point = centroid(&disc_full).map_err(|_| Reason::DiscNotFound)?;
    let (crop, origin) = crop_about(&working.image, c_full, cfg.crop_size);
    let o = (origin.x as i64, origin.y as i64);
    let disc_crop = crop_at(&disc_full, o, cfg.crop_size);
    let vessels = crop_at(&seg.vessel_mask, o, cfg.crop_size);

    let disc = keep_largest(&disc_crop).map_err(|_| Reason::DiscNotFound)?;
    let disc = smooth_edges(&fill_holes(&disc), cfg.smooth_open_radius, cfg.smooth_blur_size, cfg.smooth_threshold)
        .map_err(|_| Reason::DiscNotFound)?;
    let disc_center: Point = centroid(&disc).map_err(|_| Reason::DiscNotFound)?;
    let ellipse: Ellipse = fit_ellipse(&disc).map_err(|_| Reason::DegenerateRegion)?;

    let fovea = Point::new(seg.fovea.x - origin.x, seg.fovea.y - origin.y);
    let axis = axis_angle(disc_center, fovea).map_err(|_| Reason::FoveaNotFound)?;
    let laterality = determine_laterality(disc_center, fovea, cfg.laterality_rule, entry.expected_laterality);
    let geometry = DiscGeometry { disc_center, fovea, axis_angle_deg: axis, laterality, crop_origin: origin };

    let partition = build_partition(&disc, &vessels, disc_center, axis, cfg.band_width, cfg.control_width)
        .map_err(|_| Reason::DegenerateRegion)?;
    if let Err(msg) = partition.check_invariants() {
        log::error!("{}: partition invariant violated: {msg}", entry.image_id);
        return Err(Reason::DegenerateRegion);
    }

    let shape = DiscShape { area: area(&disc), eccentricity: ellipse.eccentricity };
    let mut record = compute_record(&entry.image_id, &entry.subject_id, &crop, &partition, &geometry, shape, 0.0)
        .map_err(|_| Reason::DegenerateRegion)?;

    let brightness = record.control_brightness.unwrap_or(0.0);
    let verdict = apply_gates(ellipse.eccentricity, brightness, &cfg.gates());
    if verdict.status != Status::OK {
        record.status = verdict.status;
        record.reject_reason = verdict.reason_text();
    }

    let details = Details { working, fovea_working: seg.fovea, crop, disc, vessels, partition, geometry, ellipse };
    Ok((record, details))
}
