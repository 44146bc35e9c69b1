//! Binary-mask morphology and shape statistics.
//!
//! Foreground components are 8-connected, background (holes) 4-connected.
//! The disc structuring element of radius `r` is `{(dx, dy) : dx² + dy² <= r²}`;
//! erosion and dilation by it are computed exactly through squared Euclidean
//! distance transforms.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::raster::BinaryMask;
use crate::scalar::Scalar;
use crate::types::{EllipseFit, PointPx};

const INF: f64 = 1e20;

/// 1-D squared distance transform of a sampled function (lower envelope of parabolas).
fn dt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        let mut s = (fq - (f[v[k]] + (v[k] * v[k]) as f64)) / (2.0 * (q as f64 - v[k] as f64));
        // z[0] is -inf, so k never underflows.
        while s <= z[k] {
            k -= 1;
            s = (fq - (f[v[k]] + (v[k] * v[k]) as f64)) / (2.0 * (q as f64 - v[k] as f64));
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance from every pixel to the nearest pixel where
/// `is_source` holds. With `outside_is_source`, pixels just beyond the raster
/// border also count as sources. Returns values >= `INF` when there is no source.
pub fn squared_distance_to(
    width: usize,
    height: usize,
    outside_is_source: bool,
    is_source: impl Fn(usize, usize) -> bool,
) -> Vec<f64> {
    let m = usize::from(outside_is_source);
    let (w, h) = (width + 2 * m, height + 2 * m);
    let mut grid = vec![INF; w * h];
    for y in 0..h {
        for x in 0..w {
            let inside = x >= m && y >= m && x < width + m && y < height + m;
            let src = if inside { is_source(x - m, y - m) } else { true };
            if src {
                grid[y * w + x] = 0.0;
            }
        }
    }
    let n = w.max(h);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        dt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        dt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    if m == 0 {
        return grid;
    }
    let mut res = Vec::with_capacity(width * height);
    for y in 0..height {
        res.extend_from_slice(&grid[(y + 1) * w + 1..(y + 1) * w + 1 + width]);
    }
    res
}

/// Erosion by the radius-`r` disc; pixels beyond the border do not erode.
pub fn erode_disc(mask: &BinaryMask, r: f64) -> BinaryMask {
    let d = squared_distance_to(mask.width(), mask.height(), false, |x, y| !mask.get(x, y));
    let r2 = r * r;
    mask.map(|_| false).with_data(|i, _| mask.as_slice()[i] && d[i] > r2)
}

/// Dilation by the radius-`r` disc.
pub fn dilate_disc(mask: &BinaryMask, r: f64) -> BinaryMask {
    let d = squared_distance_to(mask.width(), mask.height(), false, |x, y| mask.get(x, y));
    let r2 = r * r;
    mask.map(|_| false).with_data(|i, _| d[i] <= r2)
}

pub fn open_disc(mask: &BinaryMask, r: f64) -> BinaryMask {
    dilate_disc(&erode_disc(mask, r), r)
}

trait WithData {
    fn with_data(self, f: impl Fn(usize, bool) -> bool) -> Self;
}

impl WithData for BinaryMask {
    fn with_data(mut self, f: impl Fn(usize, bool) -> bool) -> Self {
        for (i, v) in self.as_mut_slice().iter_mut().enumerate() {
            *v = f(i, *v);
        }
        self
    }
}

/// Connected-component summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    pub label: u32,
    pub size: usize,
    pub min_x: usize,
    pub min_y: usize,
}

/// Labels 8-connected foreground components (labels start at 1; 0 is background).
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<Component>) {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.as_slice()[start] || labels[start] != 0 {
            continue;
        }
        let label = comps.len() as u32 + 1;
        let mut c = Component { label, size: 0, min_x: usize::MAX, min_y: usize::MAX };
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            c.size += 1;
            c.min_x = c.min_x.min(x);
            c.min_y = c.min_y.min(y);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.as_slice()[j] && labels[j] == 0 {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
        comps.push(c);
    }
    (labels, comps)
}

/// Keeps the largest 8-connected component. Ties go to the component whose
/// bounding box has the smallest top-left corner in row-major order.
pub fn keep_largest(mask: &BinaryMask) -> Result<BinaryMask> {
    let (labels, comps) = label_components(mask);
    let best = comps
        .iter()
        .min_by(|a, b| b.size.cmp(&a.size).then((a.min_y, a.min_x).cmp(&(b.min_y, b.min_x))))
        .ok_or(Error::EmptyMask)?;
    Ok(mask.map(|_| false).with_data(|i, _| labels[i] == best.label))
}

/// Fills every 4-connected background region that does not touch the border.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let data = mask.as_slice();
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let mut seed = |i: usize, q: &mut VecDeque<usize>| {
        if !data[i] && !outside[i] {
            outside[i] = true;
            q.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, &mut queue);
        seed((h - 1) * w + x, &mut queue);
    }
    for y in 0..h {
        seed(y * w, &mut queue);
        seed(y * w + w - 1, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut push = |j: usize| {
            if !data[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        };
        if x > 0 {
            push(i - 1);
        }
        if x + 1 < w {
            push(i + 1);
        }
        if y > 0 {
            push(i - w);
        }
        if y + 1 < h {
            push(i + w);
        }
    }
    mask.map(|_| false).with_data(|i, _| !outside[i])
}

/// Box-filter sums with edge replication; window `[i - (size-1)/2, i + size/2]`.
fn box_sums_1d(src: &[u32], size: usize, out: &mut [u32], prefix: &mut Vec<u64>) {
    let n = src.len() as i64;
    let lo = (size as i64 - 1) / 2;
    let hi = size as i64 / 2;
    prefix.clear();
    prefix.push(0);
    let mut acc = 0u64;
    for i in -lo..n + hi {
        acc += src[i.clamp(0, n - 1) as usize] as u64;
        prefix.push(acc);
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = (prefix[i + size] - prefix[i]) as u32;
    }
}

/// Counts of foreground pixels in the `size`×`size` window around each pixel,
/// replicating the border.
pub fn box_counts(mask: &BinaryMask, size: usize) -> Vec<u32> {
    let (w, h) = mask.dims();
    let mut rows = vec![0u32; w * h];
    let mut prefix = Vec::new();
    let mut line = vec![0u32; w.max(h)];
    let mut out = vec![0u32; w.max(h)];
    for y in 0..h {
        for (l, &m) in line.iter_mut().zip(&mask.as_slice()[y * w..(y + 1) * w]) {
            *l = u32::from(m);
        }
        box_sums_1d(&line[..w], size, &mut out[..w], &mut prefix);
        rows[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    let mut res = vec![0u32; w * h];
    for x in 0..w {
        for y in 0..h {
            line[y] = rows[y * w + x];
        }
        box_sums_1d(&line[..h], size, &mut out[..h], &mut prefix);
        for y in 0..h {
            res[y * w + x] = out[y];
        }
    }
    res
}

/// Edge smoothing: opening with a disc of `open_radius`, normalized
/// `blur_size`×`blur_size` box blur, then keep pixels whose blurred value
/// exceeds `threshold`. Radii are calibrated for the 650×650 crop.
pub fn smooth_edges(mask: &BinaryMask, open_radius: usize, blur_size: usize, threshold: f64) -> Result<BinaryMask> {
    let opened = open_disc(mask, open_radius as f64);
    let area = (blur_size * blur_size) as f64;
    let counts = box_counts(&opened, blur_size.max(1));
    let out = opened.with_data(|i, _| counts[i] as f64 / area > threshold);
    if out.any() {
        Ok(out)
    } else {
        Err(Error::EmptyMask)
    }
}

pub fn area(mask: &BinaryMask) -> usize {
    mask.count()
}

/// Mean of foreground pixel coordinates.
pub fn centroid<T: Scalar>(mask: &BinaryMask) -> Result<PointPx<T>> {
    let (mut n, mut sx, mut sy) = (0u64, 0u64, 0u64);
    for (x, y) in mask.points() {
        n += 1;
        sx += x as u64;
        sy += y as u64;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let nn = T::of_u64(n);
    Ok(PointPx::new(T::of_u64(sx) / nn, T::of_u64(sy) / nn))
}

/// Ellipse with the same normalized second central moments as the pixel set,
/// each pixel treated as a unit square (hence the 1/12 variance term).
pub fn fit_ellipse<T: Scalar>(mask: &BinaryMask) -> Result<EllipseFit<T>> {
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    if n < 5 {
        return Err(Error::DegenerateShape("fewer than 5 pixels"));
    }
    let c: PointPx<f64> = centroid(mask)?;
    let (mut sxx, mut syy, mut sxy) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in mask.points() {
        let dx = x as f64 - c.x;
        let dy = y as f64 - c.y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let nf = n as f64;
    let twelfth = T::one() / T::of(12.0);
    let uxx = T::of(sxx / nf) + twelfth;
    let uyy = T::of(syy / nf) + twelfth;
    let uxy = T::of(sxy / nf);
    let two = T::of(2.0);
    let common = ((uxx - uyy) * (uxx - uyy) + T::of(4.0) * uxy * uxy).sqrt();
    let k = two * two.sqrt();
    let major = k * (uxx + uyy + common).sqrt();
    let minor_sq = uxx + uyy - common;
    if minor_sq <= T::zero() {
        return Err(Error::DegenerateShape("zero variance along the minor axis"));
    }
    let minor = k * minor_sq.sqrt();
    let ratio = minor / major;
    let eccentricity = (T::one() - ratio * ratio).max(T::zero()).sqrt();
    let mut orientation = (two * uxy).atan2(uxx - uyy).to_degrees() / two;
    if orientation <= T::of(-90.0) {
        orientation = orientation + T::of(180.0);
    }
    Ok(EllipseFit { center: c.cast(), major_axis_len: major, minor_axis_len: minor, orientation, eccentricity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn circle(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r).unwrap()
    }

    fn ellipse(w: usize, h: usize, cx: f64, cy: f64, a: f64, b: f64, deg: f64) -> BinaryMask {
        let (s, c) = deg.to_radians().sin_cos();
        BinaryMask::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let u = c * dx + s * dy;
            let v = -s * dx + c * dy;
            (u / a).powi(2) + (v / b).powi(2) <= 1.0
        })
        .unwrap()
    }

    fn from_rows(rows: &[&str]) -> BinaryMask {
        BinaryMask::from_fn(rows[0].len(), rows.len(), |x, y| rows[y].as_bytes()[x] == b'#').unwrap()
    }

    fn brute_sq_dist(mask: &BinaryMask, target: bool, x: usize, y: usize) -> f64 {
        mask.enumerate()
            .filter(|&(_, _, v)| v == target)
            .map(|(qx, qy, _)| (qx as f64 - x as f64).powi(2) + (qy as f64 - y as f64).powi(2))
            .fold(INF, f64::min)
    }

    #[test]
    fn edt_matches_brute_force() {
        let m = from_rows(&["#....#..", "..##....", "........", ".......#", "...#...."]);
        let d = squared_distance_to(m.width(), m.height(), false, |x, y| m.get(x, y));
        for (x, y, _) in m.enumerate() {
            assert_eq!(d[y * m.width() + x], brute_sq_dist(&m, true, x, y));
        }
        let none = squared_distance_to(3, 3, false, |_, _| false);
        assert!(none.iter().all(|&v| v >= INF));
        let edge = squared_distance_to(5, 5, true, |_, _| false);
        assert_eq!(&edge[10..15], &[1.0, 4.0, 9.0, 4.0, 1.0]);
        assert_eq!(squared_distance_to(5, 1, true, |_, _| false), vec![1.0; 5]);
    }

    #[test]
    fn keep_largest_cases() {
        let single = circle(20, 20, 10.0, 10.0, 5.0);
        assert_eq!(keep_largest(&single).unwrap(), single);

        let mut two = BinaryMask::empty(30, 30).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                two.set(x + 15, y + 15, true);
            }
        }
        for i in 0..7 {
            two.set(i, 0, true);
        }
        let kept = keep_largest(&two).unwrap();
        assert_eq!(kept.count(), 100);
        assert!(!kept.get(0, 0));

        assert!(matches!(keep_largest(&BinaryMask::empty(4, 4).unwrap()), Err(Error::EmptyMask)));
    }

    #[test]
    fn keep_largest_tie_prefers_top_left() {
        let mut m = BinaryMask::empty(30, 30).unwrap();
        for i in 0..50 {
            m.set(i % 10, i / 10, true);
            m.set(10 + 2 + i % 10, 10 + i / 10, true);
        }
        let kept = keep_largest(&m).unwrap();
        assert!(kept.get(0, 0));
        assert!(!kept.get(12, 10));
        assert_eq!(kept.count(), 50);
    }

    #[test]
    fn fill_holes_cases() {
        let disc = circle(40, 40, 20.0, 20.0, 10.0);
        assert_eq!(fill_holes(&disc), disc);

        let ring = disc.minus(&circle(40, 40, 20.0, 20.0, 5.0)).unwrap();
        assert_eq!(fill_holes(&ring), disc);

        // A bay open to the image border stays open.
        let bay = from_rows(&["###.###", "#.....#", "#.....#", "#######"]);
        assert_eq!(fill_holes(&bay), bay);

        // Diagonal gaps do not connect a hole to the outside (4-connected background).
        let diag = from_rows(&[".....", ".##..", ".#.#.", "..##.", "....."]);
        assert!(fill_holes(&diag).get(2, 2));
    }

    #[test]
    fn smooth_large_circle_is_stable() {
        let c = circle(650, 650, 325.0, 325.0, 200.0);
        let s = smooth_edges(&c, 75, 21, 0.5).unwrap();
        let diff = c.minus(&s).unwrap().count() + s.minus(&c).unwrap().count();
        let perimeter = 2.0 * std::f64::consts::PI * 200.0;
        assert!((diff as f64) <= 2.0 * perimeter, "diff {diff}");
        // Every pixel kept lies within one pixel of the original radius.
        for (x, y) in s.minus(&c).unwrap().points() {
            let r = ((x as f64 - 325.0).powi(2) + (y as f64 - 325.0).powi(2)).sqrt();
            assert!(r <= 201.0);
        }
    }

    #[test]
    fn smooth_removes_spike() {
        let mut m = circle(650, 650, 325.0, 325.0, 200.0);
        for x in 520..600 {
            for y in 323..328 {
                m.set(x, y, true);
            }
        }
        let s = smooth_edges(&m, 75, 21, 0.5).unwrap();
        assert!((530..600).all(|x| !s.get(x, 325)));
    }

    #[test]
    fn smooth_small_circle_vanishes() {
        let c = circle(200, 200, 100.0, 100.0, 30.0);
        assert!(matches!(smooth_edges(&c, 75, 21, 0.5), Err(Error::EmptyMask)));
    }

    #[test]
    fn centroid_cases() {
        let mut p = BinaryMask::empty(10, 10).unwrap();
        p.set(5, 7, true);
        assert_eq!(centroid::<f64>(&p).unwrap(), PointPx::new(5.0, 7.0));

        let mut b = BinaryMask::empty(20, 20).unwrap();
        for (x, y) in [(10, 10), (11, 10), (10, 11), (11, 11)] {
            b.set(x, y, true);
        }
        assert_eq!(centroid::<f32>(&b).unwrap(), PointPx::new(10.5f32, 10.5));

        let c: PointPx<f64> = centroid(&circle(200, 200, 100.0, 100.0, 37.3)).unwrap();
        assert!(c.distance(PointPx::new(100.0, 100.0)) < 0.1);
        assert!(matches!(centroid::<f64>(&BinaryMask::empty(3, 3).unwrap()), Err(Error::EmptyMask)));
    }

    #[test]
    fn ellipse_eccentricity() {
        let c: EllipseFit<f64> = fit_ellipse(&circle(300, 300, 150.0, 150.0, 100.0)).unwrap();
        assert!(c.eccentricity < 0.05);
        assert!((c.major_axis_len - 200.0).abs() < 2.0);

        let e: EllipseFit<f64> = fit_ellipse(&ellipse(400, 400, 200.0, 200.0, 120.0, 60.0, 0.0)).unwrap();
        assert!((e.eccentricity - 0.75f64.sqrt()).abs() < 0.01, "{}", e.eccentricity);
        assert!(e.orientation.abs() < 0.5);

        let mut line = BinaryMask::empty(200, 5).unwrap();
        for x in 0..200 {
            line.set(x, 2, true);
        }
        let l: EllipseFit<f64> = fit_ellipse(&line).unwrap();
        assert!(l.eccentricity >= 0.99);

        let tiny = from_rows(&["##", "#."]);
        assert!(matches!(fit_ellipse::<f64>(&tiny), Err(Error::DegenerateShape(_))));
    }

    #[test]
    fn ellipse_rotation_invariance() {
        let base: EllipseFit<f64> = fit_ellipse(&ellipse(400, 400, 200.0, 200.0, 120.0, 80.0, 0.0)).unwrap();
        // Exact 90° rotation of the pixel set.
        let m = ellipse(400, 400, 200.0, 200.0, 120.0, 80.0, 0.0);
        let rot = BinaryMask::from_fn(400, 400, |x, y| m.get(y, 399 - x)).unwrap();
        let r: EllipseFit<f64> = fit_ellipse(&rot).unwrap();
        assert!((r.eccentricity - base.eccentricity).abs() < 1e-12);
        assert!((r.orientation.abs() - 90.0).abs() < 1e-6);
        for deg in [13.0, 37.0, 71.0] {
            let e: EllipseFit<f64> = fit_ellipse(&ellipse(400, 400, 200.0, 200.0, 120.0, 80.0, deg)).unwrap();
            assert!((e.eccentricity - base.eccentricity).abs() < 0.02);
            assert!((e.orientation - deg).abs() < 1.0);
        }
    }

    #[test]
    fn area_counts() {
        assert_eq!(area(&BinaryMask::empty(5, 5).unwrap()), 0);
        assert_eq!(area(&BinaryMask::from_fn(20, 20, |x, y| x < 10 && y < 10).unwrap()), 100);
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (4usize..32, 4usize..32, any::<u64>(), 20u64..70).prop_map(|(w, h, seed, density)| {
            let mut s = seed | 1;
            BinaryMask::from_fn(w, h, |_, _| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                s % 100 < density
            })
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn fill_and_keep_are_idempotent(m in arb_mask()) {
            let f = fill_holes(&m);
            prop_assert_eq!(fill_holes(&f), f.clone());
            prop_assert!(m.is_subset_of(&f));
            if m.any() {
                let k = keep_largest(&m).unwrap();
                prop_assert_eq!(keep_largest(&k).unwrap(), k.clone());
                prop_assert!(k.is_subset_of(&m));
            }
        }

        #[test]
        fn opening_is_anti_extensive(m in arb_mask(), r in 0.0f64..5.0) {
            let o = open_disc(&m, r);
            prop_assert!(o.is_subset_of(&m));
            prop_assert_eq!(open_disc(&o, r), o);
        }

        #[test]
        fn ellipse_translation_invariant(m in arb_mask(), dx in 0usize..8, dy in 0usize..8) {
            prop_assume!(m.count() >= 5);
            let (w, h) = m.dims();
            let shifted = BinaryMask::from_fn(w + dx, h + dy, |x, y| x >= dx && y >= dy && m.get(x - dx, y - dy)).unwrap();
            let a: EllipseFit<f64> = fit_ellipse(&m).unwrap();
            let b: EllipseFit<f64> = fit_ellipse(&shifted).unwrap();
            prop_assert!((a.eccentricity - b.eccentricity).abs() < 1e-9);
        }
    }
}
