//! Deterministic synthetic fundus scenes with analytic ground truth.
//!
//! A scene is a flat background with an elliptical disc whose marginal band
//! carries one colour (optionally per sector) and whose core carries another,
//! crossed by straight vessel strips. Because every region is flat, the pallor
//! of each zone is known in closed form.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{axis_angle, zone_angle_of};
use crate::imgio::save_png;
use crate::maskops::squared_distance_to;
use crate::preprocess::luma;
use crate::raster::{BinaryMask, FundusImage, Rgb};
use crate::types::{Zone, ZoneValues};
use crate::Point;

/// Straight vessel segment of constant width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VesselStrip {
    pub center: Point,
    pub length: f64,
    pub width: f64,
    pub angle_deg: f64,
}

impl VesselStrip {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.center.x, y - self.center.y);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        u.abs() <= self.length / 2.0 && v.abs() <= self.width / 2.0
    }
}

fn default_band_width() -> f64 {
    30.0
}
fn default_band_guard() -> f64 {
    8.0
}
fn default_crop() -> usize {
    650
}
fn default_control() -> usize {
    50
}
fn default_vessel_color() -> Rgb {
    [90, 25, 20]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthScene {
    #[serde(default)]
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub disc_center: Point,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Major-axis direction, degrees, image coordinates.
    #[serde(default)]
    pub orientation_deg: f64,
    pub band_color: Rgb,
    pub disc_core_color: Rgb,
    pub background_color: Rgb,
    #[serde(default = "default_vessel_color")]
    pub vessel_color: Rgb,
    /// Per-sector band colour overrides (PMB follows T).
    #[serde(default)]
    pub zone_band_colors: BTreeMap<Zone, Rgb>,
    pub fovea: Point,
    #[serde(default)]
    pub vessels: Vec<VesselStrip>,
    /// Depth of the band colour inside the disc margin.
    #[serde(default = "default_band_width")]
    pub band_width: f64,
    /// Extra band-colour depth so that one or two pixels of margin smoothing
    /// never pull core pixels into the measured band.
    #[serde(default = "default_band_guard")]
    pub band_guard: f64,
    #[serde(default = "default_crop")]
    pub crop_size: usize,
    #[serde(default = "default_control")]
    pub control_width: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_sd: f64,
}

/// Rendered scene and its ground truth, in the scene's own frame.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub image: FundusImage,
    pub disc_mask: BinaryMask,
    pub vessel_mask: BinaryMask,
    pub fovea: Point,
    /// Disc pixels painted with a band colour.
    pub band_paint: BinaryMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degradation {
    /// Background dark enough to fail the luminance gate.
    Dark,
    /// Disc elongated to a 2:1 ellipse (eccentricity about 0.87).
    Eccentric,
}

/// Closed-form pallor of a noise-free scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedPallor {
    pub zones: ZoneValues<f64>,
    /// Defined when all six sectors share one band colour.
    pub global: Option<f64>,
    /// Defined when the disc core also shares that colour.
    pub whole_disc: Option<f64>,
    pub control_brightness: f64,
}

impl ExpectedPallor {
    pub fn nt_ratio(&self) -> Option<f64> {
        Some(self.zones.get(Zone::N)? / self.zones.get(Zone::T)?)
    }
}

impl SynthScene {
    /// A circular disc of radius `r` at `(cx, cy)` with the fovea 600 px
    /// along `axis_deg`, no vessels.
    pub fn basic(width: usize, height: usize, cx: f64, cy: f64, r: f64, axis_deg: f64) -> Self {
        let mut s = Self {
            id: String::new(),
            width,
            height,
            disc_center: Point::new(cx, cy),
            semi_major: r,
            semi_minor: r,
            orientation_deg: 0.0,
            band_color: [200, 150, 60],
            disc_core_color: [230, 200, 120],
            background_color: [150, 100, 40],
            vessel_color: default_vessel_color(),
            zone_band_colors: BTreeMap::new(),
            fovea: Point::new(cx, cy),
            vessels: Vec::new(),
            band_width: default_band_width(),
            band_guard: default_band_guard(),
            crop_size: default_crop(),
            control_width: default_control(),
            seed: 0,
            noise_sd: 0.0,
        };
        s.set_axis(axis_deg, 600.0);
        s
    }

    /// Places the fovea at `distance` from the disc centre along `axis_deg`.
    pub fn set_axis(&mut self, axis_deg: f64, distance: f64) {
        let (s, c) = axis_deg.to_radians().sin_cos();
        self.fovea = Point::new(self.disc_center.x + distance * c, self.disc_center.y + distance * s);
    }

    pub fn axis_angle(&self) -> Result<f64> {
        axis_angle(self.disc_center, self.fovea)
    }

    pub fn band_color_of(&self, zone: Zone) -> Rgb {
        let z = if zone == Zone::PMB { Zone::T } else { zone };
        self.zone_band_colors.get(&z).copied().unwrap_or(self.band_color)
    }

    /// All colours multiplied by `k` and rounded.
    pub fn scaled(&self, k: f64) -> Self {
        let sc = |c: Rgb| c.map(|v| (v as f64 * k).round().clamp(0.0, 255.0) as u8);
        let mut s = self.clone();
        s.band_color = sc(s.band_color);
        s.disc_core_color = sc(s.disc_core_color);
        s.background_color = sc(s.background_color);
        s.vessel_color = sc(s.vessel_color);
        for c in s.zone_band_colors.values_mut() {
            *c = sc(*c);
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if self.width == 0 || self.height == 0 {
            return bad("empty canvas".into());
        }
        if !(self.semi_minor > 0.0 && self.semi_major >= self.semi_minor) {
            return bad(format!("semi-axes {} / {}", self.semi_major, self.semi_minor));
        }
        if !self.disc_center.is_finite() || !self.fovea.is_finite() {
            return bad("non-finite point".into());
        }
        let inner = (self.crop_size / 2) as f64 - self.control_width as f64;
        if self.semi_major + 2.0 > inner {
            return bad(format!("disc radius {} reaches the control frame ({inner} px from centre)", self.semi_major));
        }
        let (cx, cy, a) = (self.disc_center.x, self.disc_center.y, self.semi_major);
        if cx - a < 1.0 || cy - a < 1.0 || cx + a > self.width as f64 - 2.0 || cy + a > self.height as f64 - 2.0 {
            return bad("disc leaves the canvas".into());
        }
        if self.axis_angle().is_err() {
            return bad("fovea coincides with disc centre".into());
        }
        if self.noise_sd.is_nan() || self.noise_sd < 0.0 {
            return bad("negative noise".into());
        }
        Ok(())
    }

    fn in_disc(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.orientation_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.disc_center.x, y - self.disc_center.y);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.semi_major).powi(2) + (v / self.semi_minor).powi(2) <= 1.0
    }

    pub fn render(&self) -> Result<Rendered> {
        self.validate()?;
        let (w, h) = (self.width, self.height);
        let axis = self.axis_angle()?;

        // Disc raster and depth below the margin, computed on a window around the disc.
        let r = self.semi_major.ceil() as i64 + 2;
        let (cx, cy) = (self.disc_center.x.round() as i64, self.disc_center.y.round() as i64);
        let x0 = (cx - r).max(0) as usize;
        let y0 = (cy - r).max(0) as usize;
        let x1 = ((cx + r) as usize).min(w - 1);
        let y1 = ((cy + r) as usize).min(h - 1);
        let (ww, wh) = (x1 - x0 + 1, y1 - y0 + 1);
        let local = BinaryMask::from_fn(ww, wh, |x, y| self.in_disc((x + x0) as f64, (y + y0) as f64))?;
        let depth2 = squared_distance_to(ww, wh, true, |x, y| !local.get(x, y));
        let band_depth = self.band_width + self.band_guard;

        let mut disc_mask = BinaryMask::empty(w, h)?;
        let mut band_paint = BinaryMask::empty(w, h)?;
        let mut image = FundusImage::filled(w, h, self.background_color)?;
        for (lx, ly, inside) in local.enumerate() {
            if !inside {
                continue;
            }
            let (x, y) = (lx + x0, ly + y0);
            disc_mask.set(x, y, true);
            let colour = if depth2[ly * ww + lx] <= band_depth * band_depth {
                band_paint.set(x, y, true);
                let zone = zone_angle_of(Point::new(x as f64, y as f64), self.disc_center, axis)
                    .map(Zone::sector_of)
                    .unwrap_or(Zone::T);
                self.band_color_of(zone)
            } else {
                self.disc_core_color
            };
            image.set(x, y, colour);
        }

        let mut vessel_mask = BinaryMask::empty(w, h)?;
        for v in &self.vessels {
            let reach = (v.length.hypot(v.width) / 2.0).ceil() as i64 + 1;
            let (vx, vy) = (v.center.x.round() as i64, v.center.y.round() as i64);
            for y in (vy - reach).max(0)..=(vy + reach).min(h as i64 - 1) {
                for x in (vx - reach).max(0)..=(vx + reach).min(w as i64 - 1) {
                    if v.contains(x as f64, y as f64) {
                        vessel_mask.set(x as usize, y as usize, true);
                        image.set(x as usize, y as usize, self.vessel_color);
                    }
                }
            }
        }

        if self.noise_sd > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            let normal = Normal::new(0.0, self.noise_sd).map_err(|e| Error::InvalidScene(e.to_string()))?;
            for p in image.as_mut_slice() {
                for c in p.iter_mut() {
                    *c = (*c as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
                }
            }
        }

        Ok(Rendered { image, disc_mask, vessel_mask, fovea: self.fovea, band_paint })
    }

    pub fn expected_pallor(&self) -> Result<ExpectedPallor> {
        if self.noise_sd > 0.0 {
            return Err(Error::NoiseNotSupported);
        }
        let ratio = |c: Rgb| -> Result<f64> {
            if c[0] == 0 {
                return Err(Error::InvalidScene("zero red channel".into()));
            }
            Ok(c[1] as f64 / c[0] as f64)
        };
        let bg = ratio(self.background_color)?;
        if bg == 0.0 {
            return Err(Error::InvalidScene("zero green background".into()));
        }
        let mut zones = ZoneValues::default();
        for z in Zone::ALL {
            zones.set(z, Some(ratio(self.band_color_of(z))? / bg));
        }
        let first = self.band_color_of(Zone::T);
        let uniform = Zone::SECTORS.iter().all(|&z| self.band_color_of(z) == first);
        let global = uniform.then(|| zones.get(Zone::T)).flatten();
        let whole_disc = if uniform && self.disc_core_color == first { global } else { None };
        Ok(ExpectedPallor { zones, global, whole_disc, control_brightness: luma(self.background_color) })
    }

    pub fn degrade(&self, kind: Degradation) -> Self {
        let mut s = self.clone();
        match kind {
            Degradation::Dark => {
                let g: f64 = luma(self.background_color);
                if g > 45.0 {
                    let k = 45.0 / g;
                    let sc = |c: Rgb| c.map(|v| ((v as f64 * k).floor() as u8).max(1));
                    s.band_color = sc(s.band_color);
                    s.disc_core_color = sc(s.disc_core_color);
                    s.background_color = sc(s.background_color);
                    for c in s.zone_band_colors.values_mut() {
                        *c = sc(*c);
                    }
                }
            }
            Degradation::Eccentric => {
                // Keep the minor axis wide enough to survive edge smoothing.
                s.semi_major = s.semi_major.max(230.0);
                s.semi_minor = s.semi_major / 2.0;
            }
        }
        s
    }
}

/// Parameters for randomly generated clean scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSceneParams {
    pub width: usize,
    pub height: usize,
    pub max_vessels: usize,
}

impl Default for RandomSceneParams {
    fn default() -> Self {
        Self { width: 1400, height: 2166, max_vessels: 3 }
    }
}

/// A noise-free scene with random placement, size, orientation, colours,
/// axis and vessel strips. The disc is kept close to circular (axis ratio
/// >= 0.9, radius >= 120) so that edge smoothing only trims its margin.
pub fn random_scene(seed: u64, params: RandomSceneParams) -> SynthScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: f64 = rng.random_range(120.0..200.0);
    let b = a * rng.random_range(0.9..1.0);
    let margin = 330.0;
    let cx = rng.random_range(margin..params.width as f64 - margin).round();
    let cy = rng.random_range(margin..params.height as f64 - margin).round();
    let colour = |rng: &mut ChaCha8Rng, r: (u8, u8), g_frac: (f64, f64), b_max: u8| -> Rgb {
        let red = rng.random_range(r.0..=r.1);
        let green = ((red as f64) * rng.random_range(g_frac.0..g_frac.1)).round() as u8;
        [red, green.max(1), rng.random_range(10..=b_max)]
    };
    let mut s = SynthScene::basic(params.width, params.height, cx, cy, a, 0.0);
    s.id = format!("scene_{seed:04}");
    s.semi_minor = b;
    s.orientation_deg = rng.random_range(-90.0..90.0);
    s.background_color = colour(&mut rng, (120, 220), (0.45, 0.8), 90);
    s.band_color = colour(&mut rng, (150, 250), (0.6, 0.95), 140);
    s.disc_core_color = colour(&mut rng, (180, 255), (0.8, 1.0), 200);
    s.set_axis(rng.random_range(-180.0..180.0), rng.random_range(450.0..700.0));
    let n = rng.random_range(0..=params.max_vessels);
    for _ in 0..n {
        let t: f64 = rng.random_range(-180.0..180.0);
        let off = rng.random_range(-0.6..0.6) * a;
        let (st, ct) = t.to_radians().sin_cos();
        s.vessels.push(VesselStrip {
            center: Point::new(cx - off * st, cy + off * ct),
            length: rng.random_range(300.0..640.0),
            width: rng.random_range(4.0..14.0),
            angle_deg: t,
        });
    }
    s
}

/// Parses a scene specification: `random:N[:SEED]` or the path of a JSON
/// file holding one scene or an array of scenes.
pub fn parse_scene_spec(spec: &str) -> Result<Vec<SynthScene>> {
    if let Some(rest) = spec.strip_prefix("random:") {
        let mut parts = rest.split(':');
        let bad = || Error::Config(format!("bad scene spec `{spec}`"));
        let n: u64 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let seed: u64 = match parts.next() {
            Some(v) => v.parse().map_err(|_| bad())?,
            None => 0,
        };
        let params = RandomSceneParams::default();
        return Ok((0..n)
            .map(|i| {
                let mut s = random_scene(seed.wrapping_mul(1_000_003).wrapping_add(i), params);
                s.id = format!("scene_{i:04}");
                s
            })
            .collect());
    }
    let text = fs::read_to_string(spec).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(spec.into()),
        _ => Error::Io(e),
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let scenes = if value.is_array() { serde_json::from_value(value)? } else { vec![serde_json::from_value(value)?] };
    Ok(scenes)
}

/// Renders scenes to `dir`: `images/`, `masks/`, `manifest.csv` and
/// `expected.csv`. Scenes without an id are numbered. Returns the manifest path.
pub fn write_dataset(scenes: &[SynthScene], dir: &Path) -> Result<PathBuf> {
    if scenes.is_empty() {
        return Err(Error::EmptyList);
    }
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    let manifest_path = dir.join("manifest.csv");
    let writer = |p: &Path| csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(p);
    let mut manifest = writer(&manifest_path)?;
    manifest.write_record(["image_id", "image_path", "disc_mask_path", "vessel_mask_path", "fovea_point", "subject_id"])?;
    let mut expected = writer(&dir.join("expected.csv"))?;
    let mut header = vec!["image_id".to_string()];
    header.extend(Zone::OUTPUT_ORDER.iter().map(|z| format!("pallor_{z}")));
    header.extend(["pallor_global", "pallor_whole_disc", "control_brightness"].map(String::from));
    expected.write_record(&header)?;

    let mut seen = std::collections::HashSet::new();
    for (i, scene) in scenes.iter().enumerate() {
        let id = if scene.id.is_empty() { format!("scene_{i:04}") } else { scene.id.clone() };
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateImageId(id));
        }
        let r = scene.render()?;
        let img = format!("images/{id}.png");
        let disc = format!("masks/{id}_disc.png");
        let vessels = format!("masks/{id}_vessels.png");
        save_png(&r.image, &dir.join(&img))?;
        save_png(&r.disc_mask, &dir.join(&disc))?;
        save_png(&r.vessel_mask, &dir.join(&vessels))?;
        let fovea = format!("{},{}", r.fovea.x, r.fovea.y);
        manifest.write_record([id.as_str(), &img, &disc, &vessels, &fovea, &id])?;

        let f = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
        let mut row = vec![id.clone()];
        match scene.expected_pallor() {
            Ok(e) => {
                row.extend(Zone::OUTPUT_ORDER.iter().map(|&z| f(e.zones.get(z))));
                row.extend([f(e.global), f(e.whole_disc), f(Some(e.control_brightness))]);
            }
            Err(_) => row.extend(std::iter::repeat_n(String::new(), 10)),
        }
        expected.write_record(&row)?;
    }
    manifest.flush()?;
    expected.flush()?;
    Ok(manifest_path)
}
