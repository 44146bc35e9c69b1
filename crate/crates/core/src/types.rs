//! Domain types shared across the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Pixel coordinate; pixel centres sit on integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PointPx<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> PointPx<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Self) -> T {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<U: Scalar>(self) -> PointPx<U> {
        PointPx { x: U::of(self.x.as_f64()), y: U::of(self.y.as_f64()) }
    }
}

/// Ellipse with the same second-order central moments as a pixel set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseFit<T> {
    pub center: PointPx<T>,
    /// Full length of the major axis in pixels.
    pub major_axis_len: T,
    /// Full length of the minor axis in pixels.
    pub minor_axis_len: T,
    /// Direction of the major axis in image coordinates (y down), degrees in (-90, 90].
    pub orientation: T,
    pub eccentricity: T,
}

/// Peripapillary sector. `Pmb` (papillomacular bundle) is a sub-sector of `T`;
/// the other six tile the full circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Zone {
    T,
    TS,
    NS,
    N,
    NI,
    TI,
    PMB,
}

impl Zone {
    /// The six sectors that tile 360°.
    pub const SECTORS: [Zone; 6] = [Zone::T, Zone::TS, Zone::NS, Zone::N, Zone::NI, Zone::TI];
    pub const ALL: [Zone; 7] = [Zone::T, Zone::TS, Zone::NS, Zone::N, Zone::NI, Zone::TI, Zone::PMB];
    /// Column order used in result files.
    pub const OUTPUT_ORDER: [Zone; 7] = [Zone::T, Zone::TI, Zone::NI, Zone::N, Zone::NS, Zone::TS, Zone::PMB];

    pub fn as_str(self) -> &'static str {
        match self {
            Zone::T => "T",
            Zone::TS => "TS",
            Zone::NS => "NS",
            Zone::N => "N",
            Zone::NI => "NI",
            Zone::TI => "TI",
            Zone::PMB => "PMB",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Sector containing the zone angle `phi` (degrees, in (-180, 180]).
    ///
    /// Intervals are closed below and open above; N wraps through 180°.
    pub fn sector_of<T: Scalar>(phi: T) -> Zone {
        let d = phi.as_f64();
        if (-45.0..45.0).contains(&d) {
            Zone::T
        } else if (45.0..90.0).contains(&d) {
            Zone::TI
        } else if (90.0..135.0).contains(&d) {
            Zone::NI
        } else if (-90.0..-45.0).contains(&d) {
            Zone::TS
        } else if (-135.0..-90.0).contains(&d) {
            Zone::NS
        } else {
            Zone::N
        }
    }

    pub fn in_pmb<T: Scalar>(phi: T) -> bool {
        (-15.0..15.0).contains(&phi.as_f64())
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Zone {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Zone::ALL
            .into_iter()
            .find(|z| z.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown zone `{s}`"))
    }
}

/// One optional value per [`Zone`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZoneValues<T>(pub [Option<T>; 7]);

impl<T: Copy> ZoneValues<T> {
    pub fn get(&self, zone: Zone) -> Option<T> {
        self.0[zone.index()]
    }

    pub fn set(&mut self, zone: Zone, value: Option<T>) {
        self.0[zone.index()] = value;
    }

    pub fn from_fn(mut f: impl FnMut(Zone) -> Option<T>) -> Self {
        let mut out = ZoneValues([None; 7]);
        for z in Zone::ALL {
            out.set(z, f(z));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Laterality {
    /// Right eye.
    OD,
    /// Left eye.
    OS,
    #[default]
    UNKNOWN,
}

impl Laterality {
    pub fn as_str(self) -> &'static str {
        match self {
            Laterality::OD => "OD",
            Laterality::OS => "OS",
            Laterality::UNKNOWN => "UNKNOWN",
        }
    }
}

impl fmt::Display for Laterality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Laterality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "OD" | "R" | "RIGHT" => Ok(Laterality::OD),
            "OS" | "L" | "LEFT" => Ok(Laterality::OS),
            "" | "UNKNOWN" => Ok(Laterality::UNKNOWN),
            other => Err(format!("unknown laterality `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    OK,
    REJECTED,
    FAILED,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::OK => "OK",
            Status::REJECTED => "REJECTED",
            Status::FAILED => "FAILED",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "OK" => Ok(Status::OK),
            "REJECTED" => Ok(Status::REJECTED),
            "FAILED" => Ok(Status::FAILED),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

/// Per-image result row.
#[derive(Debug, Clone, PartialEq)]
pub struct PallorRecord {
    pub image_id: String,
    pub subject_id: String,
    pub laterality: Laterality,
    pub status: Status,
    /// Empty when `status` is OK, otherwise `;`-separated reason codes.
    pub reject_reason: String,
    pub pallor: ZoneValues<f64>,
    pub pallor_global: Option<f64>,
    pub pallor_whole_disc: Option<f64>,
    pub nt_ratio: Option<f64>,
    pub disc_area: Option<usize>,
    pub eccentricity: Option<f64>,
    pub control_brightness: Option<f64>,
    /// Zones left without pixels after vessel exclusion.
    pub missing_zones: Vec<Zone>,
    pub proc_time_ms: f64,
}

impl PallorRecord {
    /// A record for an image that could not be measured.
    pub fn failed(image_id: impl Into<String>, subject_id: impl Into<String>, reason: impl Into<String>) -> Self {
        let reason = reason.into();
        Self {
            image_id: image_id.into(),
            subject_id: subject_id.into(),
            laterality: Laterality::UNKNOWN,
            status: Status::FAILED,
            reject_reason: if reason.is_empty() { "UNKNOWN_FAILURE".into() } else { reason },
            pallor: ZoneValues::default(),
            pallor_global: None,
            pallor_whole_disc: None,
            nt_ratio: None,
            disc_area: None,
            eccentricity: None,
            control_brightness: None,
            missing_zones: Vec::new(),
            proc_time_ms: 0.0,
        }
    }

    pub fn zone(&self, zone: Zone) -> Option<f64> {
        self.pallor.get(zone)
    }
}

/// Interocular pallor variability for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct IoPvRecord {
    pub subject_id: String,
    /// Absolute left/right difference for each of the six sectors, in [`Zone::SECTORS`] order.
    pub diffs: [f64; 6],
    pub iopv: f64,
}

impl IoPvRecord {
    pub fn diff(&self, zone: Zone) -> Option<f64> {
        Zone::SECTORS.iter().position(|&z| z == zone).map(|i| self.diffs[i])
    }
}
