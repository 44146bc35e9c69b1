//! Colour-ratio pallor: per-zone green/red mean ratio in the measurement band
//! divided by the green/red median ratio in the control frame.

use crate::error::{Error, Result};
use crate::geometry::DiscGeometry;
use crate::preprocess::luma;
use crate::raster::{BinaryMask, FundusImage, GrayImage};
use crate::regions::ZonePartition;
use crate::scalar::Scalar;
use crate::types::{IoPvRecord, PallorRecord, Status, Zone, ZoneValues};

/// Red and green statistics over a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats<T> {
    pub mean_r: T,
    pub mean_g: T,
    pub median_r: T,
    pub median_g: T,
    pub n: usize,
}

/// Median of a 256-bin histogram with `n` samples; even counts average the
/// two middle order statistics.
fn hist_median<T: Scalar>(hist: &[u64; 256], n: u64) -> T {
    let order_stat = |rank: u64| -> usize {
        let mut acc = 0u64;
        for (v, &c) in hist.iter().enumerate() {
            acc += c;
            if acc > rank {
                return v;
            }
        }
        255
    };
    if n % 2 == 1 {
        T::of_usize(order_stat(n / 2))
    } else {
        (T::of_usize(order_stat(n / 2 - 1)) + T::of_usize(order_stat(n / 2))) / T::of(2.0)
    }
}

/// Median of real values; even counts average the two middle order statistics.
pub fn median<T: Scalar>(values: &mut [T]) -> Option<T> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal);
    let (_, &mut hi, _) = values.select_nth_unstable_by(n / 2, cmp);
    if n % 2 == 1 {
        return Some(hi);
    }
    let lo = values[..n / 2].iter().copied().fold(T::neg_infinity(), T::max);
    Some((lo + hi) / T::of(2.0))
}

pub fn region_stats<T: Scalar>(image: &FundusImage, region: &BinaryMask) -> Result<ChannelStats<T>> {
    image.same_dims(region)?;
    let mut hr = [0u64; 256];
    let mut hg = [0u64; 256];
    let (mut sr, mut sg, mut n) = (0u64, 0u64, 0u64);
    for (p, &m) in image.as_slice().iter().zip(region.as_slice()) {
        if m {
            hr[p[0] as usize] += 1;
            hg[p[1] as usize] += 1;
            sr += p[0] as u64;
            sg += p[1] as u64;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::DegenerateRegion);
    }
    let nn = T::of_u64(n);
    Ok(ChannelStats {
        mean_r: T::of_u64(sr) / nn,
        mean_g: T::of_u64(sg) / nn,
        median_r: hist_median(&hr, n),
        median_g: hist_median(&hg, n),
        n: n as usize,
    })
}

/// `(mean G / mean R)` of the measurement region over `(median G / median R)`
/// of the control region.
pub fn zone_pallor<T: Scalar>(measure: &ChannelStats<T>, control: &ChannelStats<T>) -> Result<T> {
    if measure.mean_r == T::zero() || control.median_r == T::zero() || control.median_g == T::zero() {
        return Err(Error::DivisionDegenerate);
    }
    Ok((measure.mean_g / measure.mean_r) / (control.median_g / control.median_r))
}

/// Median greyscale level over the control region.
pub fn control_brightness<T: Scalar>(gray: &GrayImage<T>, control: &BinaryMask) -> Result<T> {
    gray.same_dims(control)?;
    let mut vals: Vec<T> = gray.as_slice().iter().zip(control.as_slice()).filter(|(_, &m)| m).map(|(&g, _)| g).collect();
    median(&mut vals).ok_or(Error::DegenerateRegion)
}

/// Pallor quantities for one crop.
#[derive(Debug, Clone, PartialEq)]
pub struct PallorMeasures<T> {
    pub zones: ZoneValues<T>,
    pub missing_zones: Vec<Zone>,
    /// Pooled over every band pixel.
    pub global: T,
    pub whole_disc: Option<T>,
    pub control: ChannelStats<T>,
    pub control_brightness: T,
}

impl<T: Scalar> PallorMeasures<T> {
    pub fn nt_ratio(&self) -> Option<T> {
        Some(self.zones.get(Zone::N)? / self.zones.get(Zone::T)?)
    }
}

pub fn compute_measures<T: Scalar>(crop: &FundusImage, partition: &ZonePartition) -> Result<PallorMeasures<T>> {
    let control = region_stats::<T>(crop, &partition.control)?;
    let pallor_of = |mask: &BinaryMask| -> Result<T> { zone_pallor(&region_stats::<T>(crop, mask)?, &control) };

    let global = pallor_of(&partition.band)?;
    let mut missing = Vec::new();
    let zones = ZoneValues::from_fn(|z| match pallor_of(partition.zone(z)) {
        Ok(v) => Some(v),
        Err(_) => {
            missing.push(z);
            None
        }
    });
    let whole_disc = pallor_of(&partition.whole_disc).ok();

    let mut grey: Vec<T> = crop
        .as_slice()
        .iter()
        .zip(partition.control.as_slice())
        .filter(|(_, &m)| m)
        .map(|(&p, _)| luma::<T>(p))
        .collect();
    let control_brightness = median(&mut grey).ok_or(Error::DegenerateRegion)?;

    Ok(PallorMeasures { zones, missing_zones: missing, global, whole_disc, control, control_brightness })
}

/// Disc shape covariates attached to a record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscShape {
    pub area: usize,
    pub eccentricity: f64,
}

/// Assembles an OK record from the crop, its regions and the disc geometry.
/// Quality gates are applied separately.
pub fn compute_record(
    image_id: &str,
    subject_id: &str,
    crop: &FundusImage,
    partition: &ZonePartition,
    geometry: &DiscGeometry<f64>,
    shape: DiscShape,
    proc_time_ms: f64,
) -> Result<PallorRecord> {
    let m = compute_measures::<f64>(crop, partition)?;
    Ok(PallorRecord {
        image_id: image_id.to_string(),
        subject_id: subject_id.to_string(),
        laterality: geometry.laterality,
        status: Status::OK,
        reject_reason: String::new(),
        pallor: m.zones,
        pallor_global: Some(m.global),
        pallor_whole_disc: m.whole_disc,
        nt_ratio: m.nt_ratio(),
        disc_area: Some(shape.area),
        eccentricity: Some(shape.eccentricity),
        control_brightness: Some(m.control_brightness),
        missing_zones: m.missing_zones,
        proc_time_ms,
    })
}

/// Sum over the six sectors of the absolute left/right pallor difference.
pub fn iopv(left: &PallorRecord, right: &PallorRecord) -> Result<IoPvRecord> {
    let mut diffs = [0.0; 6];
    for (d, &z) in diffs.iter_mut().zip(&Zone::SECTORS) {
        let l = left.zone(z).ok_or(Error::MissingZone(z))?;
        let r = right.zone(z).ok_or(Error::MissingZone(z))?;
        *d = (l - r).abs();
    }
    Ok(IoPvRecord { subject_id: left.subject_id.clone(), diffs, iopv: diffs.iter().sum() })
}
