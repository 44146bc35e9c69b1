//! Diagnostic overlay panels.
//!
//! A: display-rotated working image with the disc–fovea line
//! B: the crop (plus its CLAHE green channel)
//! C: disc without vessels
//! D: measurement band without vessels
//! E: band and control frame
//! F: zone wheel, zones above the reference mean + 1 SD tinted red
//! G: per-zone bar chart with a dashed mean + 1 SD marker
//!
//! F and G need reference statistics; without them only A–E are written.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::evalmetrics::aggregate;
use crate::geometry::rotate_for_display;
use crate::imgio::save_png;
use crate::pipeline::Details;
use crate::preprocess::{channel, clahe};
use crate::raster::{BinaryMask, FundusImage, Rgb};
use crate::types::{PallorRecord, Status, Zone};
use crate::Point;

/// Per-zone mean and standard deviation of pallor in a reference cohort.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReferenceStats {
    pub zones: BTreeMap<Zone, (f64, f64)>,
}

impl ReferenceStats {
    /// `mean + sd` for a zone.
    pub fn upper(&self, z: Zone) -> Option<f64> {
        self.zones.get(&z).map(|(m, s)| m + s)
    }

    /// Statistics over the OK records.
    pub fn from_records(records: &[PallorRecord]) -> Self {
        let mut zones = BTreeMap::new();
        for z in Zone::OUTPUT_ORDER {
            let vals: Vec<f64> =
                records.iter().filter(|r| r.status == Status::OK).filter_map(|r| r.zone(z)).collect();
            if let Ok(s) = aggregate(&vals) {
                zones.insert(z, (s.mean, s.sd));
            }
        }
        Self { zones }
    }

    /// Reads a `zone,mean,sd` CSV.
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |name: &'static str| headers.iter().position(|h| h.trim() == name).ok_or(Error::MissingColumn(name));
        let (zi, mi, si) = (col("zone")?, col("mean")?, col("sd")?);
        let mut zones = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |msg: String| Error::ManifestRow { row: i + 2, msg };
            let z: Zone = rec.get(zi).unwrap_or("").trim().parse().map_err(bad)?;
            let num = |k: usize| -> Result<f64> {
                let s = rec.get(k).unwrap_or("").trim();
                s.parse().map_err(|_| Error::ManifestRow { row: i + 2, msg: format!("bad number `{s}`") })
            };
            zones.insert(z, (num(mi)?, num(si)?));
        }
        Ok(Self { zones })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        wtr.write_record(["zone", "mean", "sd"])?;
        for z in Zone::OUTPUT_ORDER {
            if let Some((m, s)) = self.zones.get(&z) {
                wtr.write_record([z.as_str().to_string(), format!("{m:.6}"), format!("{s:.6}")])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn blend(p: Rgb, tint: Rgb, alpha: f64) -> Rgb {
    std::array::from_fn(|i| (p[i] as f64 * (1.0 - alpha) + tint[i] as f64 * alpha).round() as u8)
}

fn masked(image: &FundusImage, mask: &BinaryMask) -> FundusImage {
    FundusImage::from_fn(image.width(), image.height(), |x, y| if mask.get(x, y) { image.get(x, y) } else { [0; 3] })
        .expect("non-empty")
}

fn tint(image: &mut FundusImage, mask: &BinaryMask, colour: Rgb, alpha: f64) {
    for (p, &m) in image.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        if m {
            *p = blend(*p, colour, alpha);
        }
    }
}

fn draw_line(image: &mut FundusImage, a: Point, b: Point, colour: Rgb, half_width: i64) {
    let steps = a.distance(b).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let (x, y) = ((a.x + t * (b.x - a.x)).round() as i64, (a.y + t * (b.y - a.y)).round() as i64);
        for dy in -half_width..=half_width {
            for dx in -half_width..=half_width {
                let (px, py) = (x + dx, y + dy);
                if px >= 0 && py >= 0 && (px as usize) < image.width() && (py as usize) < image.height() {
                    image.set(px as usize, py as usize, colour);
                }
            }
        }
    }
}

fn fill_rect(image: &mut FundusImage, x0: usize, y0: usize, x1: usize, y1: usize, colour: Rgb) {
    for y in y0..y1.min(image.height()) {
        for x in x0..x1.min(image.width()) {
            image.set(x, y, colour);
        }
    }
}

const ZONE_COLOURS: [Rgb; 6] = [[80, 160, 255], [80, 220, 120], [240, 200, 60], [200, 120, 240], [60, 220, 220], [255, 150, 80]];

fn panel_a(d: &Details) -> FundusImage {
    let mut img = d.working.image.clone();
    let disc = Point::new(d.geometry.disc_center.x + d.geometry.crop_origin.x, d.geometry.disc_center.y + d.geometry.crop_origin.y);
    draw_line(&mut img, disc, d.fovea_working, [255, 255, 0], 2);
    rotate_for_display(&img, d.geometry.axis_angle_deg, disc)
}

fn panel_e(d: &Details) -> FundusImage {
    let mut img = d.crop.clone();
    tint(&mut img, &d.partition.band, [0, 255, 0], 0.5);
    tint(&mut img, &d.partition.control, [0, 80, 255], 0.5);
    img
}

fn panel_f(d: &Details, record: &PallorRecord, reference: &ReferenceStats) -> FundusImage {
    let mut img = masked(&d.crop, &d.partition.band);
    for (i, z) in Zone::SECTORS.into_iter().enumerate() {
        let high = matches!((record.zone(z), reference.upper(z)), (Some(v), Some(u)) if v > u);
        let colour = if high { [255, 0, 0] } else { ZONE_COLOURS[i] };
        tint(&mut img, d.partition.zone(z), colour, 0.6);
    }
    let pmb_high = matches!((record.zone(Zone::PMB), reference.upper(Zone::PMB)), (Some(v), Some(u)) if v > u);
    if pmb_high {
        tint(&mut img, d.partition.zone(Zone::PMB), [255, 0, 0], 0.8);
    }
    img
}

/// Bar chart, one bar per zone in output order, scaled so that 2.0 fills the height.
pub fn bar_chart(record: &PallorRecord, reference: &ReferenceStats) -> FundusImage {
    let (w, h, bar, gap) = (7 * 60 + 20, 300usize, 40usize, 20usize);
    let mut img = FundusImage::filled(w, h, [255; 3]).expect("fixed size");
    let y_of = |v: f64| h - ((v / 2.0).clamp(0.0, 1.0) * (h - 10) as f64).round() as usize;
    for (i, z) in Zone::OUTPUT_ORDER.into_iter().enumerate() {
        let x0 = gap + i * (bar + gap);
        if let Some(v) = record.zone(z) {
            let high = reference.upper(z).is_some_and(|u| v > u);
            fill_rect(&mut img, x0, y_of(v), x0 + bar, h, if high { [220, 40, 40] } else { [90, 110, 200] });
        }
        if let Some(u) = reference.upper(z) {
            let y = y_of(u).min(h - 1);
            for x in (x0.saturating_sub(6)..x0 + bar + 6).filter(|x| (x / 4) % 2 == 0) {
                fill_rect(&mut img, x, y.saturating_sub(1), x + 1, y + 1, [0, 0, 0]);
            }
        }
    }
    img
}

/// Writes the panels for one processed image into `dir` and returns their paths.
pub fn write_panels(
    dir: &Path,
    record: &PallorRecord,
    details: &Details,
    reference: Option<&ReferenceStats>,
    cfg: &PipelineConfig,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let id = &record.image_id;
    let mut written = Vec::new();
    let mut save = |tag: &str, img: &FundusImage| -> Result<()> {
        let p = dir.join(format!("{id}_{tag}.png"));
        save_png(img, &p)?;
        written.push(p);
        Ok(())
    };
    save("A", &panel_a(details))?;
    save("B", &details.crop)?;
    let green = clahe::<f64>(&channel(&details.crop, 1), cfg.clahe_tiles, cfg.clahe_clip_limit)?;
    save("B_clahe", &green.map(|v| { let g = v.round().clamp(0.0, 255.0) as u8; [g, g, g] }))?;
    save("C", &masked(&details.crop, &details.partition.whole_disc))?;
    save("D", &masked(&details.crop, &details.partition.band))?;
    save("E", &panel_e(details))?;
    match reference {
        Some(r) => {
            save("F", &panel_f(details, record, r))?;
            save("G", &bar_chart(record, r))?;
        }
        None => log::warn!("{id}: no reference statistics, skipping panels F and G"),
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_stats_round_trip() {
        let mut r = ReferenceStats::default();
        r.zones.insert(Zone::T, (1.5, 0.1));
        r.zones.insert(Zone::PMB, (1.6, 0.2));
        let tmp = tempfile::NamedTempFile::new().unwrap();
        r.write(tmp.path()).unwrap();
        assert_eq!(ReferenceStats::read(tmp.path()).unwrap(), r);
        assert!((r.upper(Zone::T).unwrap() - 1.6).abs() < 1e-12);
        assert_eq!(r.upper(Zone::N), None);
    }

    #[test]
    fn bar_chart_marks_high_zones() {
        let mut rec = PallorRecord::failed("x", "x", "x");
        rec.status = Status::OK;
        rec.pallor.set(Zone::T, Some(1.8));
        rec.pallor.set(Zone::TI, Some(1.0));
        let mut r = ReferenceStats::default();
        r.zones.insert(Zone::T, (1.4, 0.1));
        r.zones.insert(Zone::TI, (1.4, 0.1));
        let img = bar_chart(&rec, &r);
        assert_eq!(img.get(40, 299), [220, 40, 40]);
        assert_eq!(img.get(100, 299), [90, 110, 200]);
    }
}
