//! Segmentation and localization evaluation metrics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pallor::median;
use crate::raster::BinaryMask;
use crate::scalar::Scalar;
use crate::types::PointPx;

/// `|pred ∩ gt| / |pred ∪ gt|`; two empty masks score 1.
pub fn iou<T: Scalar>(pred: &BinaryMask, gt: &BinaryMask) -> Result<T> {
    pred.same_dims(gt)?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        inter += u64::from(p && g);
        union += u64::from(p || g);
    }
    if union == 0 {
        return Ok(T::one());
    }
    Ok(T::of_u64(inter) / T::of_u64(union))
}

/// Foreground recall `TP / (TP + FN)`.
pub fn mean_accuracy<T: Scalar>(pred: &BinaryMask, gt: &BinaryMask) -> Result<T> {
    pred.same_dims(gt)?;
    let (mut tp, mut pos) = (0u64, 0u64);
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        tp += u64::from(p && g);
        pos += u64::from(g);
    }
    if pos == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(T::of_u64(tp) / T::of_u64(pos))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointError<T> {
    /// Euclidean distance in pixels.
    pub ed: T,
    /// Distance as a percentage of the disc major axis length, when given.
    pub pct_of_disc: Option<T>,
}

pub fn point_error<T: Scalar>(pred: PointPx<T>, gt: PointPx<T>, disc_major_axis: Option<T>) -> PointError<T> {
    let ed = pred.distance(gt);
    let pct_of_disc = disc_major_axis.filter(|&a| a > T::zero()).map(|a| T::of(100.0) * ed / a);
    PointError { ed, pct_of_disc }
}

/// Fovea localization score in fractions of the disc radius R.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum OneRBin {
    /// Within 0.25 R.
    Q25,
    /// Within 0.5 R.
    Q50,
    /// Within R.
    R1,
    Fail,
}

impl OneRBin {
    pub fn as_str(self) -> &'static str {
        match self {
            OneRBin::Q25 => "Q25",
            OneRBin::Q50 => "Q50",
            OneRBin::R1 => "R1",
            OneRBin::Fail => "FAIL",
        }
    }
}

/// Bins are inclusive at their outer radius.
pub fn one_r_bin<T: Scalar>(pred: PointPx<T>, gt: PointPx<T>, disc_radius: T) -> OneRBin {
    let d = pred.distance(gt);
    if d <= T::of(0.25) * disc_radius {
        OneRBin::Q25
    } else if d <= T::of(0.5) * disc_radius {
        OneRBin::Q50
    } else if d <= disc_radius {
        OneRBin::R1
    } else {
        OneRBin::Fail
    }
}

/// Cumulative fractions of a corpus within each radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OneRScore {
    pub within_q25: f64,
    pub within_q50: f64,
    pub within_r1: f64,
    pub failure: f64,
}

impl OneRScore {
    pub fn from_bins(bins: &[OneRBin]) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::EmptyList);
        }
        let n = bins.len() as f64;
        let frac = |max: OneRBin| bins.iter().filter(|&&b| b <= max).count() as f64 / n;
        let within_r1 = frac(OneRBin::R1);
        Ok(Self { within_q25: frac(OneRBin::Q25), within_q50: frac(OneRBin::Q50), within_r1, failure: 1.0 - within_r1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary<T> {
    pub mean: T,
    /// Sample standard deviation (n - 1); 0 for a single value.
    pub sd: T,
    pub median: T,
    pub n: usize,
}

pub fn aggregate<T: Scalar>(values: &[T]) -> Result<Summary<T>> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptyList);
    }
    let nn = T::of_usize(n);
    let mean = values.iter().copied().fold(T::zero(), |a, b| a + b) / nn;
    let sd = if n > 1 {
        let ss = values.iter().map(|&v| (v - mean) * (v - mean)).fold(T::zero(), |a, b| a + b);
        (ss / T::of_usize(n - 1)).sqrt()
    } else {
        T::zero()
    };
    let mut sorted = values.to_vec();
    let median = median(&mut sorted).expect("non-empty");
    Ok(Summary { mean, sd, median, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(w: usize, x0: usize, y0: usize, sx: usize, sy: usize) -> BinaryMask {
        BinaryMask::from_fn(w, w, |x, y| x >= x0 && x < x0 + sx && y >= y0 && y < y0 + sy).unwrap()
    }

    #[test]
    fn iou_cases() {
        let a = square(30, 0, 0, 10, 10);
        assert_eq!(iou::<f64>(&a, &a).unwrap(), 1.0);
        assert_eq!(iou::<f64>(&a, &square(30, 15, 15, 5, 5)).unwrap(), 0.0);
        let b = square(30, 5, 0, 10, 10);
        assert!((iou::<f64>(&a, &b).unwrap() - 50.0 / 150.0).abs() < 1e-15);
        let e = BinaryMask::empty(30, 30).unwrap();
        assert_eq!(iou::<f32>(&e, &e).unwrap(), 1.0);
        assert!(iou::<f64>(&a, &BinaryMask::empty(3, 3).unwrap()).is_err());
    }

    #[test]
    fn accuracy_cases() {
        let gt = square(30, 0, 0, 10, 10);
        assert_eq!(mean_accuracy::<f64>(&square(30, 0, 0, 20, 20), &gt).unwrap(), 1.0);
        assert_eq!(mean_accuracy::<f64>(&square(30, 20, 20, 5, 5), &gt).unwrap(), 0.0);
        assert!((mean_accuracy::<f64>(&square(30, 0, 0, 10, 9), &gt).unwrap() - 0.9).abs() < 1e-15);
        let e = BinaryMask::empty(30, 30).unwrap();
        assert!(matches!(mean_accuracy::<f64>(&gt, &e), Err(Error::EmptyGroundTruth)));
    }

    #[test]
    fn point_errors() {
        let e = point_error(PointPx::new(0.0f64, 0.0), PointPx::new(3.0, 4.0), None);
        assert_eq!(e.ed, 5.0);
        assert_eq!(e.pct_of_disc, None);
        let p = point_error(PointPx::new(0.0f64, 0.0), PointPx::new(2.06, 0.0), Some(102.0));
        assert!((p.pct_of_disc.unwrap() - 2.02).abs() < 0.01);
        assert_eq!(point_error(PointPx::new(1.0f32, 1.0), PointPx::new(1.0, 1.0), Some(5.0)).ed, 0.0);
    }

    #[test]
    fn one_r_bins() {
        let o = PointPx::new(0.0f64, 0.0);
        assert_eq!(one_r_bin(o, o, 60.0), OneRBin::Q25);
        assert_eq!(one_r_bin(PointPx::new(30.0, 0.0), o, 60.0), OneRBin::Q50);
        assert_eq!(one_r_bin(PointPx::new(15.0, 0.0), o, 60.0), OneRBin::Q25);
        assert_eq!(one_r_bin(PointPx::new(60.0, 0.0), o, 60.0), OneRBin::R1);
        assert_eq!(one_r_bin(PointPx::new(61.0, 0.0), o, 60.0), OneRBin::Fail);
        let s = OneRScore::from_bins(&[OneRBin::Q25, OneRBin::Q50, OneRBin::R1, OneRBin::Fail]).unwrap();
        assert_eq!((s.within_q25, s.within_q50, s.within_r1, s.failure), (0.25, 0.5, 0.75, 0.25));
    }

    #[test]
    fn aggregates() {
        let s = aggregate(&[5.0f64]).unwrap();
        assert_eq!((s.mean, s.sd, s.median), (5.0, 0.0, 5.0));
        let s = aggregate(&[1.0f64, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.sd, s.median), (2.0, 1.0, 2.0));
        assert!(matches!(aggregate::<f64>(&[]), Err(Error::EmptyList)));
    }

    fn arb_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (2usize..20, prop::collection::vec(any::<(bool, bool)>(), 400)).prop_map(|(w, bits)| {
            let a = BinaryMask::from_fn(w, w, |x, y| bits[(y * w + x) % 400].0).unwrap();
            let b = BinaryMask::from_fn(w, w, |x, y| bits[(y * w + x) % 400].1).unwrap();
            (a, b)
        })
    }

    proptest! {
        #[test]
        fn iou_properties((a, b) in arb_pair()) {
            let ab: f64 = iou(&a, &b).unwrap();
            prop_assert_eq!(ab, iou::<f64>(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a == b);
            if b.any() {
                prop_assert!(mean_accuracy::<f64>(&a, &b).unwrap() >= ab);
            }
        }
    }
}
