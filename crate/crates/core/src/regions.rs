//! Measurement band, control frame, whole-disc region, vessel exclusion and
//! the angular zone partition. All masks live in the crop frame.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::rotated_angle;
use crate::maskops::squared_distance_to;
use crate::raster::BinaryMask;
use crate::scalar::Scalar;
use crate::types::{PointPx, Zone};

#[derive(Debug, Clone)]
pub struct ZonePartition {
    /// Vessel-free measurement band.
    pub band: BinaryMask,
    pub zones: BTreeMap<Zone, BinaryMask>,
    /// Vessel-free control frame.
    pub control: BinaryMask,
    /// Vessel-free disc.
    pub whole_disc: BinaryMask,
}

impl ZonePartition {
    pub fn zone(&self, z: Zone) -> &BinaryMask {
        &self.zones[&z]
    }

    /// Checks that the six sectors are pairwise disjoint and tile the band,
    /// that PMB lies inside T and that the control frame misses the band.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let n = self.band.len();
        let mut cover = vec![0u8; n];
        for z in Zone::SECTORS {
            for (c, &b) in cover.iter_mut().zip(self.zone(z).as_slice()) {
                *c += u8::from(b);
            }
        }
        for (i, (&c, &b)) in cover.iter().zip(self.band.as_slice()).enumerate() {
            if c > 1 {
                return Err(format!("pixel {i} assigned to {c} sectors"));
            }
            if (c == 1) != b {
                return Err(format!("sector union differs from band at pixel {i}"));
            }
        }
        if !self.zone(Zone::PMB).is_subset_of(self.zone(Zone::T)) {
            return Err("PMB not contained in T".into());
        }
        if !self.control.is_disjoint(&self.band) {
            return Err("control frame overlaps the band".into());
        }
        Ok(())
    }
}

/// Disc pixels within Euclidean distance `width` of the nearest non-disc
/// pixel (the crop border counts as non-disc).
pub fn measurement_band(disc: &BinaryMask, width: f64) -> Result<BinaryMask> {
    if !disc.any() {
        return Err(Error::EmptyMask);
    }
    let d = squared_distance_to(disc.width(), disc.height(), true, |x, y| !disc.get(x, y));
    let w2 = width * width;
    let mut out = disc.clone();
    for (v, &dd) in out.as_mut_slice().iter_mut().zip(&d) {
        *v = *v && dd <= w2;
    }
    Ok(out)
}

/// Frame of `width` pixels along the edges of a `size`×`size` crop.
pub fn control_frame(size: usize, width: usize) -> Result<BinaryMask> {
    BinaryMask::from_fn(size, size, |x, y| {
        x < width || y < width || x + width >= size || y + width >= size
    })
}

/// `region \ vessels`.
pub fn exclude_vessels(region: &BinaryMask, vessels: &BinaryMask) -> Result<BinaryMask> {
    region.minus(vessels)
}

pub fn whole_disc_region(disc: &BinaryMask, vessels: &BinaryMask) -> Result<BinaryMask> {
    if !disc.any() {
        return Err(Error::EmptyMask);
    }
    let r = disc.minus(vessels)?;
    if r.any() {
        Ok(r)
    } else {
        Err(Error::DegenerateRegion)
    }
}

/// Assigns every band pixel to a sector by its zone angle; PMB is the
/// [-15°, 15°) slice of T. Pixels at the disc centre itself belong to T.
pub fn partition_zones<T: Scalar>(
    band: &BinaryMask,
    disc_center: PointPx<T>,
    axis_angle_deg: T,
) -> Result<BTreeMap<Zone, BinaryMask>> {
    if !band.any() {
        return Err(Error::EmptyMask);
    }
    let (w, h) = band.dims();
    let mut zones: BTreeMap<Zone, BinaryMask> =
        Zone::ALL.iter().map(|&z| (z, BinaryMask::empty(w, h).expect("dims"))).collect();
    let sc = axis_angle_deg.to_radians().sin_cos();
    let mut assign = vec![None; w * h];
    for (x, y) in band.points() {
        let dx = T::of_usize(x) - disc_center.x;
        let dy = T::of_usize(y) - disc_center.y;
        let phi = if dx == T::zero() && dy == T::zero() { T::zero() } else { rotated_angle(dx, dy, sc) };
        assign[y * w + x] = Some((Zone::sector_of(phi), Zone::in_pmb(phi)));
    }
    for (i, a) in assign.into_iter().enumerate() {
        if let Some((z, pmb)) = a {
            let (x, y) = (i % w, i / w);
            zones.get_mut(&z).expect("sector").set(x, y, true);
            if pmb {
                zones.get_mut(&Zone::PMB).expect("pmb").set(x, y, true);
            }
        }
    }
    Ok(zones)
}

/// Builds every measurement region from a post-processed disc and vessel mask
/// in the crop frame.
pub fn build_partition<T: Scalar>(
    disc: &BinaryMask,
    vessels: &BinaryMask,
    disc_center: PointPx<T>,
    axis_angle_deg: T,
    band_width: f64,
    control_width: usize,
) -> Result<ZonePartition> {
    disc.same_dims(vessels)?;
    let band = exclude_vessels(&measurement_band(disc, band_width)?, vessels)?;
    if !band.any() {
        return Err(Error::DegenerateRegion);
    }
    let zones = partition_zones(&band, disc_center, axis_angle_deg)?;
    let control = exclude_vessels(&control_frame(disc.width(), control_width)?, vessels)?;
    let whole_disc = whole_disc_region(disc, vessels)?;
    Ok(ZonePartition { band, zones, control, whole_disc })
}
