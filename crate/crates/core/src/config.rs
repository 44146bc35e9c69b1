//! Pipeline configuration. Every key can be set from a `key=value` file.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::LateralityRule;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// Zero columns added to the left and right before resizing.
    pub border_px: usize,
    /// Working image height after resizing.
    pub target_height: usize,
    pub clahe_tiles: usize,
    pub clahe_clip_limit: f64,
    pub smooth_open_radius: usize,
    pub smooth_blur_size: usize,
    pub smooth_threshold: f64,
    pub crop_size: usize,
    pub laterality_rule: LateralityRule,
    pub band_width: f64,
    pub control_width: usize,
    pub max_eccentricity: f64,
    pub min_brightness: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            border_px: 300,
            target_height: 2166,
            clahe_tiles: 8,
            clahe_clip_limit: 0.01,
            smooth_open_radius: 75,
            smooth_blur_size: 21,
            smooth_threshold: 0.5,
            crop_size: 650,
            laterality_rule: LateralityRule::FoveaLeftIsOd,
            band_width: 30.0,
            control_width: 50,
            max_eccentricity: 0.65,
            min_brightness: 50.0,
        }
    }
}

impl PipelineConfig {
    pub fn gates(&self) -> crate::quality::GateConfig {
        crate::quality::GateConfig { max_eccentricity: self.max_eccentricity, min_brightness: self.min_brightness }
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
        }
        let v = value.trim();
        match key.trim() {
            "border_px" => self.border_px = parse(key, v)?,
            "target_height" => self.target_height = parse(key, v)?,
            "clahe.tiles" => self.clahe_tiles = parse(key, v)?,
            "clahe.clip_limit" => self.clahe_clip_limit = parse(key, v)?,
            "smooth.open_radius" => self.smooth_open_radius = parse(key, v)?,
            "smooth.blur_size" => self.smooth_blur_size = parse(key, v)?,
            "smooth.threshold" => self.smooth_threshold = parse(key, v)?,
            "crop.size" => self.crop_size = parse(key, v)?,
            "laterality.rule" => self.laterality_rule = v.parse().map_err(Error::Config)?,
            "band.width" => self.band_width = parse(key, v)?,
            "control.width" => self.control_width = parse(key, v)?,
            "gates.max_eccentricity" => self.max_eccentricity = parse(key, v)?,
            "gates.min_brightness" => self.min_brightness = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.target_height == 0 {
            return bad("target_height must be positive");
        }
        if self.crop_size == 0 || self.crop_size <= 2 * self.control_width {
            return bad("crop.size must exceed twice control.width");
        }
        if self.clahe_tiles == 0 || !(0.0..=1.0).contains(&self.clahe_clip_limit) {
            return bad("clahe.tiles must be positive and clahe.clip_limit in [0,1]");
        }
        if self.smooth_blur_size == 0 || !(0.0..1.0).contains(&self.smooth_threshold) {
            return bad("smooth.blur_size must be positive and smooth.threshold in [0,1)");
        }
        if self.band_width.is_nan() || self.band_width < 0.0 {
            return bad("band.width must be non-negative");
        }
        if !(0.0..1.0).contains(&self.max_eccentricity) || !(0.0..=255.0).contains(&self.min_brightness) {
            return bad("gates out of range");
        }
        Ok(())
    }
}
