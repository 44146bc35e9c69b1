//! Segmentation providers: where the disc mask, vessel mask and fovea come from.
//!
//! The pipeline never runs a model itself. A provider receives the
//! preprocessed image and its manifest entry and returns masks and the fovea
//! in the working frame, doing whatever rescaling its native frame requires.

use std::collections::HashMap;
use std::fmt;

use crate::imgio::{load_mask, FoveaSource, ManifestEntry};
use crate::maskops::centroid;
use crate::preprocess::PreprocessedImage;
use crate::quality::Reason;
use crate::raster::BinaryMask;
use crate::synth::Rendered;
use crate::Point;

#[derive(Debug, Clone)]
pub struct ProviderOutput {
    pub disc_mask: BinaryMask,
    pub vessel_mask: BinaryMask,
    pub fovea: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProvisionFailure {
    DiscNotFound,
    FoveaNotFound,
    VesselsNotFound,
    DimensionMismatch,
}

impl ProvisionFailure {
    pub fn reason(self) -> Reason {
        match self {
            Self::DiscNotFound => Reason::DiscNotFound,
            Self::FoveaNotFound => Reason::FoveaNotFound,
            Self::VesselsNotFound => Reason::VesselsNotFound,
            Self::DimensionMismatch => Reason::DimensionMismatch,
        }
    }
}

impl fmt::Display for ProvisionFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.reason().as_str())
    }
}

impl std::error::Error for ProvisionFailure {}

pub trait SegmentationProvider: Send + Sync {
    fn provide(&self, image: &PreprocessedImage, entry: &ManifestEntry) -> Result<ProviderOutput, ProvisionFailure>;
}

/// Brings a source-frame (or already working-frame) mask into the working frame.
fn to_working(image: &PreprocessedImage, mask: &BinaryMask) -> Result<BinaryMask, ProvisionFailure> {
    image.mask_to_working(mask).map_err(|_| ProvisionFailure::DimensionMismatch)
}

/// Reads disc/vessel/fovea sidecar files named in the manifest entry.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaskFileProvider;

impl SegmentationProvider for MaskFileProvider {
    fn provide(&self, image: &PreprocessedImage, entry: &ManifestEntry) -> Result<ProviderOutput, ProvisionFailure> {
        let disc_path = entry.disc_mask_path.as_ref().ok_or(ProvisionFailure::DiscNotFound)?;
        let disc = load_mask(disc_path).map_err(|e| {
            log::warn!("{}: disc mask {}: {e}", entry.image_id, disc_path.display());
            ProvisionFailure::DiscNotFound
        })?;
        let disc_mask = to_working(image, &disc)?;
        if !disc_mask.any() {
            return Err(ProvisionFailure::DiscNotFound);
        }

        let vessel_path = entry.vessel_mask_path.as_ref().ok_or(ProvisionFailure::VesselsNotFound)?;
        let vessels = load_mask(vessel_path).map_err(|e| {
            log::warn!("{}: vessel mask {}: {e}", entry.image_id, vessel_path.display());
            ProvisionFailure::VesselsNotFound
        })?;
        let vessel_mask = to_working(image, &vessels)?;

        let fovea = match &entry.fovea {
            Some(FoveaSource::Point(p)) => image.to_working(*p),
            Some(FoveaSource::Mask(path)) => {
                let m = load_mask(path).map_err(|_| ProvisionFailure::FoveaNotFound)?;
                let c: Point = centroid(&m).map_err(|_| ProvisionFailure::FoveaNotFound)?;
                if m.dims() == image.image.dims() {
                    c
                } else if m.dims() == (image.original_width, image.original_height) {
                    image.to_working(c)
                } else {
                    return Err(ProvisionFailure::DimensionMismatch);
                }
            }
            None => return Err(ProvisionFailure::FoveaNotFound),
        };
        Ok(ProviderOutput { disc_mask, vessel_mask, fovea })
    }
}

/// Serves the exact ground truth of rendered synthetic scenes.
#[derive(Debug, Clone, Default)]
pub struct SyntheticProvider {
    scenes: HashMap<String, Rendered>,
    fallback: Option<Rendered>,
}

impl SyntheticProvider {
    /// Provider answering every entry with the same scene.
    pub fn new(rendered: Rendered) -> Self {
        Self { scenes: HashMap::new(), fallback: Some(rendered) }
    }

    /// Provider keyed by manifest image id.
    pub fn from_scenes(scenes: impl IntoIterator<Item = (String, Rendered)>) -> Self {
        Self { scenes: scenes.into_iter().collect(), fallback: None }
    }

    pub fn insert(&mut self, image_id: impl Into<String>, rendered: Rendered) {
        self.scenes.insert(image_id.into(), rendered);
    }
}

impl SegmentationProvider for SyntheticProvider {
    fn provide(&self, image: &PreprocessedImage, entry: &ManifestEntry) -> Result<ProviderOutput, ProvisionFailure> {
        let r = self.scenes.get(&entry.image_id).or(self.fallback.as_ref()).ok_or(ProvisionFailure::DiscNotFound)?;
        let disc_mask = to_working(image, &r.disc_mask)?;
        if !disc_mask.any() {
            return Err(ProvisionFailure::DiscNotFound);
        }
        Ok(ProviderOutput { disc_mask, vessel_mask: to_working(image, &r.vessel_mask)?, fovea: image.to_working(r.fovea) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::save_png;
    use crate::maskops::label_components;
    use crate::preprocess::preprocess;
    use crate::raster::FundusImage;

    fn circle(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r).unwrap()
    }

    struct Fixture {
        _dir: tempfile::TempDir,
        entry: ManifestEntry,
        pre: PreprocessedImage,
    }

    fn fixture(w: usize, h: usize, disc: &BinaryMask, vessels: &BinaryMask, fovea: Option<FoveaSource>) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let img = FundusImage::filled(w, h, [120, 80, 40]).unwrap();
        let dp = dir.path().join("disc.png");
        let vp = dir.path().join("vessels.png");
        save_png(disc, &dp).unwrap();
        save_png(vessels, &vp).unwrap();
        let mut entry = ManifestEntry::new("img", dir.path().join("img.png"));
        entry.disc_mask_path = Some(dp);
        entry.vessel_mask_path = Some(vp);
        entry.fovea = fovea;
        let pre = preprocess(&img, 300, 2166).unwrap();
        Fixture { _dir: dir, entry, pre }
    }

    #[test]
    fn sidecars_pass_through_at_reference_height() {
        let disc = circle(1200, 2166, 600.0, 1000.0, 150.0);
        let vessels = BinaryMask::from_fn(1200, 2166, |x, _| (590..600).contains(&x)).unwrap();
        let f = fixture(1200, 2166, &disc, &vessels, Some(FoveaSource::Point(Point::new(100.0, 1000.0))));
        let out = MaskFileProvider.provide(&f.pre, &f.entry).unwrap();
        assert_eq!(out.disc_mask.dims(), (1800, 2166));
        assert_eq!(out.disc_mask.count(), disc.count());
        assert!(out.disc_mask.get(900, 1000) && !out.disc_mask.get(600, 1000));
        assert_eq!(out.vessel_mask.count(), vessels.count());
        assert_eq!(out.fovea, Point::new(400.0, 1000.0));
    }

    #[test]
    fn fovea_from_mask_centroid() {
        let disc = circle(1400, 2166, 300.0, 1000.0, 120.0);
        let fmask = circle(1400, 2166, 800.0, 1000.0, 150.0);
        let dir = tempfile::tempdir().unwrap();
        let fp = dir.path().join("fovea.png");
        save_png(&fmask, &fp).unwrap();
        let none = BinaryMask::empty(1400, 2166).unwrap();
        let f = fixture(1400, 2166, &disc, &none, Some(FoveaSource::Mask(fp)));
        let out = MaskFileProvider.provide(&f.pre, &f.entry).unwrap();
        assert!(out.fovea.distance(Point::new(1100.0, 1000.0)) <= 0.5);
        // All-black vessel file: empty vessel mask, still a valid provision.
        assert!(!out.vessel_mask.any());
    }

    #[test]
    fn failures() {
        let w = 400;
        let h = 2166;
        let disc = circle(w, h, 200.0, 900.0, 100.0);
        let none = BinaryMask::empty(w, h).unwrap();
        let f = fixture(w, h, &disc, &none, None);
        assert_eq!(MaskFileProvider.provide(&f.pre, &f.entry).unwrap_err(), ProvisionFailure::FoveaNotFound);

        let f = fixture(w, h, &none, &none, Some(FoveaSource::Point(Point::new(0.0, 0.0))));
        assert_eq!(MaskFileProvider.provide(&f.pre, &f.entry).unwrap_err(), ProvisionFailure::DiscNotFound);

        let mut f = fixture(w, h, &disc, &none, Some(FoveaSource::Point(Point::new(0.0, 0.0))));
        f.entry.vessel_mask_path = None;
        assert_eq!(MaskFileProvider.provide(&f.pre, &f.entry).unwrap_err(), ProvisionFailure::VesselsNotFound);

        let odd = BinaryMask::filled(17, 9, true).unwrap();
        let f = fixture(w, h, &disc, &odd, Some(FoveaSource::Point(Point::new(0.0, 0.0))));
        assert_eq!(MaskFileProvider.provide(&f.pre, &f.entry).unwrap_err(), ProvisionFailure::DimensionMismatch);
    }

    #[test]
    fn source_frame_masks_are_rescaled() {
        // 1000-row source: masks at source size come back scaled by ~2.166 per axis.
        let (w, h) = (900, 1000);
        let disc = circle(w, h, 450.0, 500.0, 80.0);
        let none = BinaryMask::empty(w, h).unwrap();
        let f = fixture(w, h, &disc, &none, Some(FoveaSource::Point(Point::new(100.0, 500.0))));
        let out = MaskFileProvider.provide(&f.pre, &f.entry).unwrap();
        assert_eq!(out.disc_mask.dims(), f.pre.image.dims());
        let s = f.pre.scale_factor;
        let ratio = out.disc_mask.count() as f64 / (disc.count() as f64 * s * s);
        assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
        assert_eq!(label_components(&out.disc_mask).1.len(), 1);
        let c: Point = centroid(&out.disc_mask).unwrap();
        assert!(c.distance(f.pre.to_working(Point::new(450.0, 500.0))) < 1.0);
    }
}
