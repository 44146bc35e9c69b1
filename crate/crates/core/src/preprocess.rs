//! Canonicalization to the working geometry (side padding, resize to a fixed
//! height) plus greyscale conversion and CLAHE for display.

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, FundusImage, GrayImage, Rgb};
use crate::scalar::Scalar;
use crate::types::PointPx;

/// Image in the working frame along with the mapping back to the source frame.
#[derive(Debug, Clone)]
pub struct PreprocessedImage {
    pub image: FundusImage,
    /// Resized height over original height.
    pub scale_factor: f64,
    /// Zero columns added on each side before resizing.
    pub pad_px: usize,
    pub original_width: usize,
    pub original_height: usize,
}

impl PreprocessedImage {
    /// Horizontal and vertical scale actually applied (they differ by the
    /// rounding of the output width).
    pub fn scales(&self) -> (f64, f64) {
        let padded_w = self.original_width + 2 * self.pad_px;
        (self.image.width() as f64 / padded_w as f64, self.image.height() as f64 / self.original_height as f64)
    }

    /// Maps a source-frame point into the working frame.
    pub fn to_working<T: Scalar>(&self, p: PointPx<T>) -> PointPx<T> {
        let (sx, sy) = self.scales();
        let half = T::of(0.5);
        PointPx::new(
            (p.x + T::of_usize(self.pad_px) + half) * T::of(sx) - half,
            (p.y + half) * T::of(sy) - half,
        )
    }

    pub fn to_source<T: Scalar>(&self, p: PointPx<T>) -> PointPx<T> {
        let (sx, sy) = self.scales();
        let half = T::of(0.5);
        PointPx::new((p.x + half) / T::of(sx) - half - T::of_usize(self.pad_px), (p.y + half) / T::of(sy) - half)
    }

    /// Brings a mask drawn on the source image into the working frame by
    /// nearest-neighbour sampling. Masks already at working size pass through.
    pub fn mask_to_working(&self, mask: &BinaryMask) -> Result<BinaryMask> {
        let (ww, wh) = self.image.dims();
        if mask.dims() == (ww, wh) {
            return Ok(mask.clone());
        }
        if mask.dims() != (self.original_width, self.original_height) {
            return Err(Error::DimensionMismatch(mask.width(), mask.height(), self.original_width, self.original_height));
        }
        let (sx, sy) = self.scales();
        let pad = self.pad_px as i64;
        let xs: Vec<i64> = (0..ww).map(|u| ((u as f64 + 0.5) / sx).floor() as i64 - pad).collect();
        let ys: Vec<i64> = (0..wh).map(|v| ((v as f64 + 0.5) / sy).floor() as i64).collect();
        BinaryMask::from_fn(ww, wh, |u, v| mask.get_signed(xs[u], ys[v]).unwrap_or(false))
    }
}

/// Adds `border_px` zero columns to the left and right.
pub fn pad_sides(image: &FundusImage, border_px: usize) -> FundusImage {
    if border_px == 0 {
        return image.clone();
    }
    let w = image.width() + 2 * border_px;
    let mut data = Vec::with_capacity(w * image.height());
    for row in image.as_slice().chunks(image.width()) {
        data.extend(std::iter::repeat_n([0u8; 3], border_px));
        data.extend_from_slice(row);
        data.extend(std::iter::repeat_n([0u8; 3], border_px));
    }
    FundusImage::from_vec(w, image.height(), data).expect("dimensions grow")
}

/// Bilinear resize to `target_h` rows preserving the aspect ratio.
///
/// An image that already has the target height is returned unchanged.
pub fn resize_to_height(image: &FundusImage, target_h: usize) -> Result<(FundusImage, f64)> {
    if target_h == 0 {
        return Err(Error::InvalidDimensions { width: image.width(), height: 0 });
    }
    let (w, h) = image.dims();
    let scale = target_h as f64 / h as f64;
    if h == target_h {
        return Ok((image.clone(), 1.0));
    }
    let new_w = ((w as f64 * scale).round() as usize).max(1);
    Ok((resize_bilinear(image, new_w, target_h), scale))
}

fn axis_weights(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let s = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let c = ((i as f64 + 0.5) * s - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = c.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, c - i0 as f64)
        })
        .collect()
}

pub fn resize_bilinear(image: &FundusImage, new_w: usize, new_h: usize) -> FundusImage {
    let xw = axis_weights(image.width(), new_w);
    let yw = axis_weights(image.height(), new_h);
    let mut data: Vec<Rgb> = Vec::with_capacity(new_w * new_h);
    for &(y0, y1, fy) in &yw {
        for &(x0, x1, fx) in &xw {
            let p00 = image.get(x0, y0);
            let p10 = image.get(x1, y0);
            let p01 = image.get(x0, y1);
            let p11 = image.get(x1, y1);
            let mut out = [0u8; 3];
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
                let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                out[c] = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
            }
            data.push(out);
        }
    }
    FundusImage::from_vec(new_w, new_h, data).expect("positive dims")
}

/// Pads then resizes, recording the frame mapping.
pub fn preprocess(image: &FundusImage, border_px: usize, target_h: usize) -> Result<PreprocessedImage> {
    let padded = pad_sides(image, border_px);
    let (resized, scale) = resize_to_height(&padded, target_h)?;
    Ok(PreprocessedImage {
        image: resized,
        scale_factor: scale,
        pad_px: border_px,
        original_width: image.width(),
        original_height: image.height(),
    })
}

/// Rec.601 luma weights.
pub fn luma<T: Scalar>(p: Rgb) -> T {
    // Integer weights keep grey levels exact (a uniform 50 is 50, not 49.999...).
    T::of_u64(299 * p[0] as u64 + 587 * p[1] as u64 + 114 * p[2] as u64) / T::of(1000.0)
}

pub fn to_gray<T: Scalar>(image: &FundusImage) -> GrayImage<T> {
    image.map(luma::<T>)
}

/// One channel as a real-valued raster.
pub fn channel<T: Scalar>(image: &FundusImage, c: usize) -> GrayImage<T> {
    image.map(|p| T::of(p[c] as f64))
}

/// Contrast-limited adaptive histogram equalization.
///
/// The image is split into a `tiles`×`tiles` grid; each tile gets a 256-bin
/// histogram clipped at `clip_limit` (fraction of the range between a flat
/// histogram and the tile size, as in the usual normalized formulation), the
/// excess redistributed uniformly, and the cumulative histogram used as the
/// tile mapping. Output pixels blend the four nearest tile mappings bilinearly.
pub fn clahe<T: Scalar>(gray: &GrayImage<T>, tiles: usize, clip_limit: f64) -> Result<GrayImage<T>> {
    const BINS: usize = 256;
    let (w, h) = gray.dims();
    if tiles == 0 || w < tiles || h < tiles {
        return Err(Error::ImageTooSmall { width: w, height: h, tiles });
    }
    let bin_of = |v: T| v.as_f64().round().clamp(0.0, 255.0) as usize;
    let bounds = |n: usize| -> Vec<usize> { (0..=tiles).map(|i| i * n / tiles).collect() };
    let xb = bounds(w);
    let yb = bounds(h);

    let mut maps = vec![[0.0f64; BINS]; tiles * tiles];
    for ty in 0..tiles {
        for tx in 0..tiles {
            let mut hist = [0u64; BINS];
            for y in yb[ty]..yb[ty + 1] {
                for x in xb[tx]..xb[tx + 1] {
                    hist[bin_of(gray.get(x, y))] += 1;
                }
            }
            maps[ty * tiles + tx] = tile_mapping(&hist, clip_limit);
        }
    }

    // Tile centres along each axis.
    let centres = |b: &[usize]| -> Vec<f64> { b.windows(2).map(|p| (p[0] + p[1]) as f64 / 2.0 - 0.5).collect() };
    let cx = centres(&xb);
    let cy = centres(&yb);
    let locate = |c: &[f64], v: f64| -> (usize, usize, f64) {
        if v <= c[0] {
            return (0, 0, 0.0);
        }
        if v >= c[c.len() - 1] {
            return (c.len() - 1, c.len() - 1, 0.0);
        }
        let i = c.windows(2).position(|p| v >= p[0] && v < p[1]).unwrap_or(c.len() - 2);
        (i, i + 1, (v - c[i]) / (c[i + 1] - c[i]))
    };
    let xs: Vec<_> = (0..w).map(|x| locate(&cx, x as f64)).collect();
    let ys: Vec<_> = (0..h).map(|y| locate(&cy, y as f64)).collect();

    GrayImage::from_fn(w, h, |x, y| {
        let b = bin_of(gray.get(x, y));
        let (x0, x1, fx) = xs[x];
        let (y0, y1, fy) = ys[y];
        let m = |tx: usize, ty: usize| maps[ty * tiles + tx][b];
        let top = m(x0, y0) * (1.0 - fx) + m(x1, y0) * fx;
        let bot = m(x0, y1) * (1.0 - fx) + m(x1, y1) * fx;
        T::of((top * (1.0 - fy) + bot * fy).clamp(0.0, 255.0))
    })
}

/// Clipped-histogram CDF mapping to [0, 255] for one tile.
pub(crate) fn tile_mapping(hist: &[u64; 256], clip_limit: f64) -> [f64; 256] {
    let n: u64 = hist.iter().sum();
    let nbins = hist.len() as u64;
    let min_clip = n.div_ceil(nbins);
    let clip = min_clip + (clip_limit * (n - min_clip) as f64).round() as u64;

    let mut clipped = [0f64; 256];
    let mut excess = 0u64;
    for (c, &h) in clipped.iter_mut().zip(hist) {
        if h > clip {
            excess += h - clip;
            *c = clip as f64;
        } else {
            *c = h as f64;
        }
    }
    let share = excess as f64 / nbins as f64;
    let mut map = [0f64; 256];
    let mut acc = 0.0;
    for (m, c) in map.iter_mut().zip(&clipped) {
        acc += c + share;
        *m = 255.0 * acc / n as f64;
    }
    map
}
