//! Disc–fovea axis, laterality, the working crop and zone angles.
//!
//! All angles are in degrees in image coordinates (x right, y down), so a
//! positive angle turns clockwise on screen.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{FundusImage, Raster};
use crate::scalar::Scalar;
use crate::types::{Laterality, PointPx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum LateralityRule {
    /// Fovea displayed left of the disc means a right eye.
    #[default]
    FoveaLeftIsOd,
    FoveaLeftIsOs,
    /// Only the manifest's expected laterality is used.
    ManifestOnly,
}

impl FromStr for LateralityRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "fovea_left_is_od" => Ok(Self::FoveaLeftIsOd),
            "fovea_left_is_os" => Ok(Self::FoveaLeftIsOs),
            "manifest_only" => Ok(Self::ManifestOnly),
            other => Err(format!("unknown laterality rule `{other}`")),
        }
    }
}

impl fmt::Display for LateralityRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FoveaLeftIsOd => "fovea_left_is_od",
            Self::FoveaLeftIsOs => "fovea_left_is_os",
            Self::ManifestOnly => "manifest_only",
        })
    }
}

/// Disc/fovea placement in the crop frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscGeometry<T> {
    pub disc_center: PointPx<T>,
    pub fovea: PointPx<T>,
    /// Direction of disc→fovea, in (-180, 180].
    pub axis_angle_deg: T,
    pub laterality: Laterality,
    /// Top-left of the crop in the working frame.
    pub crop_origin: PointPx<T>,
}

fn normalize_deg<T: Scalar>(d: T) -> T {
    if d <= T::of(-180.0) {
        d + T::of(360.0)
    } else {
        d
    }
}

/// Direction of the vector disc→fovea.
pub fn axis_angle<T: Scalar>(disc_center: PointPx<T>, fovea: PointPx<T>) -> Result<T> {
    let (dx, dy) = (fovea.x - disc_center.x, fovea.y - disc_center.y);
    if dx == T::zero() && dy == T::zero() {
        return Err(Error::CoincidentPoints);
    }
    Ok(normalize_deg(dy.atan2(dx).to_degrees()))
}

/// Laterality from the horizontal disc/fovea offset (1 px dead band), unless
/// the manifest supplies one.
pub fn determine_laterality<T: Scalar>(
    disc_center: PointPx<T>,
    fovea: PointPx<T>,
    rule: LateralityRule,
    expected: Option<Laterality>,
) -> Laterality {
    if let Some(l) = expected {
        return l;
    }
    let eps = T::one();
    let side = if fovea.x < disc_center.x - eps {
        Some(true)
    } else if fovea.x > disc_center.x + eps {
        Some(false)
    } else {
        None
    };
    match (rule, side) {
        (LateralityRule::FoveaLeftIsOd, Some(true)) | (LateralityRule::FoveaLeftIsOs, Some(false)) => Laterality::OD,
        (LateralityRule::FoveaLeftIsOd, Some(false)) | (LateralityRule::FoveaLeftIsOs, Some(true)) => Laterality::OS,
        _ => Laterality::UNKNOWN,
    }
}

/// Top-left corner of a `size`×`size` window centred on `center`.
pub fn crop_origin<T: Scalar>(center: PointPx<T>, size: usize) -> (i64, i64) {
    let half = (size / 2) as i64;
    let cx = center.x.round().to_i64().unwrap_or(0);
    let cy = center.y.round().to_i64().unwrap_or(0);
    (cx - half, cy - half)
}

/// Copies the window at `origin`; source pixels outside the raster read as `P::default()`.
pub fn crop_at<P: Copy + Default>(raster: &Raster<P>, origin: (i64, i64), size: usize) -> Raster<P> {
    Raster::from_fn(size, size, |x, y| {
        raster.get_signed(origin.0 + x as i64, origin.1 + y as i64).unwrap_or_default()
    })
    .expect("crop size positive")
}

/// `size`×`size` crop centred on `center`, with its origin.
pub fn crop_about<P: Copy + Default, T: Scalar>(
    raster: &Raster<P>,
    center: PointPx<T>,
    size: usize,
) -> (Raster<P>, PointPx<T>) {
    let origin = crop_origin(center, size);
    (crop_at(raster, origin, size), PointPx::new(T::of(origin.0 as f64), T::of(origin.1 as f64)))
}

/// Angle of `pixel` around `disc_center` measured from the disc–fovea axis,
/// in (-180, 180]. Positive angles run image-downward from the axis, i.e.
/// toward the inferior retina for an upright photograph of either eye.
pub fn zone_angle_of<T: Scalar>(pixel: PointPx<T>, disc_center: PointPx<T>, axis_angle_deg: T) -> Result<T> {
    let (dx, dy) = (pixel.x - disc_center.x, pixel.y - disc_center.y);
    if dx == T::zero() && dy == T::zero() {
        return Err(Error::CoincidentPoints);
    }
    Ok(rotated_angle(dx, dy, axis_angle_deg.to_radians().sin_cos()))
}

/// Frame rotation that puts the axis on +x; `sc` is `(sin θ, cos θ)`.
#[inline]
pub(crate) fn rotated_angle<T: Scalar>(dx: T, dy: T, sc: (T, T)) -> T {
    let (s, c) = sc;
    let u = c * dx + s * dy;
    let v = c * dy - s * dx;
    normalize_deg(v.atan2(u).to_degrees())
}

/// Rotates by `-axis_angle_deg` about `center` (bilinear) so that the axis
/// becomes horizontal. Display only.
pub fn rotate_for_display<T: Scalar>(image: &FundusImage, axis_angle_deg: T, center: PointPx<T>) -> FundusImage {
    let theta = axis_angle_deg.as_f64();
    if theta == 0.0 {
        return image.clone();
    }
    let (s, c) = theta.to_radians().sin_cos();
    let (cx, cy) = (center.x.as_f64(), center.y.as_f64());
    let (w, h) = image.dims();
    FundusImage::from_fn(w, h, |x, y| {
        let (qx, qy) = (x as f64 - cx, y as f64 - cy);
        let sx = cx + c * qx - s * qy;
        let sy = cy + s * qx + c * qy;
        sample_bilinear(image, sx, sy)
    })
    .expect("same dims")
}

fn sample_bilinear(image: &FundusImage, x: f64, y: f64) -> [u8; 3] {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let px = |xx: i64, yy: i64| image.get_signed(xx, yy).unwrap_or([0; 3]);
    let (p00, p10, p01, p11) = (px(x0, y0), px(x0 + 1, y0), px(x0, y0 + 1), px(x0 + 1, y0 + 1));
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BinaryMask;
    use proptest::prelude::*;

    type P = PointPx<f64>;

    #[test]
    fn axis_angles() {
        assert_eq!(axis_angle(P::new(0.0, 0.0), P::new(10.0, 0.0)).unwrap(), 0.0);
        assert_eq!(axis_angle(P::new(0.0, 0.0), P::new(0.0, 10.0)).unwrap(), 90.0);
        assert!((axis_angle(P::new(100.0, 100.0), P::new(50.0, 150.0)).unwrap() - 135.0).abs() < 1e-12);
        assert_eq!(axis_angle(P::new(0.0, 0.0), P::new(-5.0, 0.0)).unwrap(), 180.0);
        assert!(matches!(axis_angle(P::new(1.0, 1.0), P::new(1.0, 1.0)), Err(Error::CoincidentPoints)));
        let f: f32 = axis_angle(PointPx::new(0.0f32, 0.0), PointPx::new(0.0, -3.0)).unwrap();
        assert_eq!(f, -90.0);
    }

    #[test]
    fn laterality_rule() {
        let disc = P::new(1000.0, 1000.0);
        let rule = LateralityRule::FoveaLeftIsOd;
        assert_eq!(determine_laterality(disc, P::new(400.0, 1000.0), rule, None), Laterality::OD);
        assert_eq!(determine_laterality(disc, P::new(1600.0, 1000.0), rule, None), Laterality::OS);
        assert_eq!(determine_laterality(disc, P::new(1000.5, 400.0), rule, None), Laterality::UNKNOWN);
        assert_eq!(
            determine_laterality(disc, P::new(400.0, 1000.0), LateralityRule::FoveaLeftIsOs, None),
            Laterality::OS
        );
        assert_eq!(
            determine_laterality(disc, P::new(400.0, 1000.0), LateralityRule::ManifestOnly, None),
            Laterality::UNKNOWN
        );
        assert_eq!(determine_laterality(disc, P::new(400.0, 1000.0), rule, Some(Laterality::OS)), Laterality::OS);
    }

    #[test]
    fn laterality_flips_under_mirroring() {
        for (dx, dy) in [(-600.0, 20.0), (450.0, -30.0), (0.5, 100.0)] {
            let disc = P::new(800.0, 800.0);
            let fovea = P::new(800.0 + dx, 800.0 + dy);
            let a = determine_laterality(disc, fovea, LateralityRule::FoveaLeftIsOd, None);
            let m = |p: P| P::new(2000.0 - p.x, p.y);
            let b = determine_laterality(m(disc), m(fovea), LateralityRule::FoveaLeftIsOd, None);
            let flipped = match a {
                Laterality::OD => Laterality::OS,
                Laterality::OS => Laterality::OD,
                Laterality::UNKNOWN => Laterality::UNKNOWN,
            };
            assert_eq!(b, flipped);
        }
    }

    #[test]
    fn crop_interior_and_edge() {
        let img = FundusImage::from_fn(2000, 1500, |x, y| [(x % 251) as u8 + 1, (y % 251) as u8 + 1, 7]).unwrap();
        let (c, o) = crop_about(&img, P::new(1000.0, 750.0), 650);
        assert_eq!(c.dims(), (650, 650));
        assert_eq!(o, P::new(675.0, 425.0));
        assert!(c.as_slice().iter().all(|p| p[2] == 7));

        let (c, o) = crop_about(&img, P::new(100.0, 750.0), 650);
        assert_eq!(o.x, -225.0);
        for y in [0usize, 300, 649] {
            assert!((0..225).all(|x| c.get(x, y) == [0, 0, 0]));
            assert_ne!(c.get(225, y), [0, 0, 0]);
        }
    }

    #[test]
    fn crop_area_is_intersection() {
        let m = BinaryMask::from_fn(300, 300, |x, y| (x + 2 * y) % 3 == 0).unwrap();
        let center = P::new(40.0, 250.0);
        let (c, o) = crop_about(&m, center, 120);
        let inside = m.points().filter(|&(x, y)| {
            let (x, y) = (x as f64, y as f64);
            x >= o.x && x < o.x + 120.0 && y >= o.y && y < o.y + 120.0
        });
        assert_eq!(c.count(), inside.count());
    }

    #[test]
    fn zone_angles() {
        let c = P::new(0.0, 0.0);
        assert_eq!(zone_angle_of(P::new(5.0, 0.0), c, 0.0).unwrap(), 0.0);
        assert_eq!(zone_angle_of(P::new(0.0, 5.0), c, 0.0).unwrap(), 90.0);
        assert_eq!(zone_angle_of(P::new(3.0, 3.0), c, 0.0).unwrap(), 45.0);
        let th = 30f64.to_radians();
        let a = zone_angle_of(P::new(10.0 * th.cos(), 10.0 * th.sin()), c, 30.0).unwrap();
        assert!(a.abs() < 1e-12);
        assert_eq!(zone_angle_of(P::new(-4.0, 0.0), c, 0.0).unwrap(), 180.0);
        assert!(matches!(zone_angle_of(c, c, 10.0), Err(Error::CoincidentPoints)));
    }

    #[test]
    fn display_rotation_moves_axis_to_horizontal() {
        let mut img = FundusImage::filled(101, 101, [0, 0, 0]).unwrap();
        let c = P::new(50.0, 50.0);
        img.set(50, 60, [255, 255, 255]);
        let r = rotate_for_display(&img, 90.0, c);
        let (mut best, mut at) = (0u8, (0, 0));
        for (x, y, p) in r.enumerate() {
            if p[0] > best {
                best = p[0];
                at = (x, y);
            }
        }
        assert!((at.0 as i64 - 60).abs() <= 1 && (at.1 as i64 - 50).abs() <= 1, "{at:?}");
        assert_eq!(rotate_for_display(&img, 0.0, c), img);
    }

    #[test]
    fn display_rotation_round_trip() {
        let img = FundusImage::from_fn(160, 160, |x, y| {
            let v = (((x as f64 / 9.0).sin() + (y as f64 / 13.0).cos()) * 60.0 + 128.0) as u8;
            [v, v / 2, 255 - v]
        })
        .unwrap();
        let c = P::new(80.0, 80.0);
        let back = rotate_for_display(&rotate_for_display(&img, 33.0, c), -33.0, c);
        // Compare away from the corners, which rotate out of frame.
        let (mut sum, mut n) = (0.0, 0usize);
        for (x, y, p) in img.enumerate() {
            if (x as f64 - 80.0).hypot(y as f64 - 80.0) < 70.0 {
                let q = back.get(x, y);
                sum += (0..3).map(|k| (p[k] as f64 - q[k] as f64).abs()).sum::<f64>() / 3.0;
                n += 1;
            }
        }
        assert!(sum / (n as f64) < 2.0, "mean abs diff {}", sum / n as f64);
    }

    proptest! {
        #[test]
        fn zone_angle_invariant_under_joint_rotation(
            px in -300.0f64..300.0, py in -300.0f64..300.0,
            fx in -700.0f64..700.0, fy in -700.0f64..700.0,
            rot in -180.0f64..180.0,
        ) {
            prop_assume!(px.hypot(py) > 1.0 && fx.hypot(fy) > 1.0);
            let c = P::new(0.0, 0.0);
            let axis = axis_angle(c, P::new(fx, fy)).unwrap();
            let a = zone_angle_of(P::new(px, py), c, axis).unwrap();
            let (s, co) = rot.to_radians().sin_cos();
            let r = |x: f64, y: f64| P::new(co * x - s * y, s * x + co * y);
            let axis2 = axis_angle(c, r(fx, fy)).unwrap();
            let b = zone_angle_of(r(px, py), c, axis2).unwrap();
            let diff = (a - b).abs();
            prop_assert!(diff < 1e-9 || (360.0 - diff) < 1e-9, "{a} vs {b}");
        }
    }
}
