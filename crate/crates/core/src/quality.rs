//! Automatic rejection gates and failure taxonomy.

use std::fmt;

use serde::Serialize;

use crate::types::Status;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateConfig {
    /// Reject when disc eccentricity is strictly greater than this.
    pub max_eccentricity: f64,
    /// Reject when control-region brightness is strictly below this.
    pub min_brightness: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { max_eccentricity: 0.65, min_brightness: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Reason {
    HighEccentricity,
    LowLuminance,
    DiscNotFound,
    FoveaNotFound,
    VesselsNotFound,
    DimensionMismatch,
    DegenerateRegion,
    ImageUnreadable,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::HighEccentricity => "HIGH_ECCENTRICITY",
            Reason::LowLuminance => "LOW_LUMINANCE",
            Reason::DiscNotFound => "DISC_NOT_FOUND",
            Reason::FoveaNotFound => "FOVEA_NOT_FOUND",
            Reason::VesselsNotFound => "VESSELS_NOT_FOUND",
            Reason::DimensionMismatch => "DIMENSION_MISMATCH",
            Reason::DegenerateRegion => "DEGENERATE_REGION",
            Reason::ImageUnreadable => "IMAGE_UNREADABLE",
        }
    }

    /// Gate violations reject; everything else is a processing failure.
    pub fn is_gate(self) -> bool {
        matches!(self, Reason::HighEccentricity | Reason::LowLuminance)
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityVerdict {
    pub status: Status,
    pub reasons: Vec<Reason>,
}

impl QualityVerdict {
    pub fn ok() -> Self {
        Self { status: Status::OK, reasons: Vec::new() }
    }

    pub fn failed(reason: Reason) -> Self {
        Self { status: Status::FAILED, reasons: vec![reason] }
    }

    /// `;`-joined reason codes.
    pub fn reason_text(&self) -> String {
        self.reasons.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(";")
    }
}

/// Either gate alone rejects. Values exactly at a threshold pass.
pub fn apply_gates(eccentricity: f64, control_brightness: f64, config: &GateConfig) -> QualityVerdict {
    let mut reasons = Vec::new();
    if eccentricity > config.max_eccentricity {
        reasons.push(Reason::HighEccentricity);
    }
    if control_brightness < config.min_brightness {
        reasons.push(Reason::LowLuminance);
    }
    if reasons.is_empty() {
        QualityVerdict::ok()
    } else {
        QualityVerdict { status: Status::REJECTED, reasons }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gate_examples() {
        let g = GateConfig::default();
        assert_eq!(apply_gates(0.40, 110.2, &g), QualityVerdict::ok());
        let v = apply_gates(0.70, 120.0, &g);
        assert_eq!((v.status, v.reasons.as_slice()), (Status::REJECTED, &[Reason::HighEccentricity][..]));
        let v = apply_gates(0.30, 49.0, &g);
        assert_eq!((v.status, v.reasons.as_slice()), (Status::REJECTED, &[Reason::LowLuminance][..]));
        let v = apply_gates(0.9, 10.0, &g);
        assert_eq!(v.reason_text(), "HIGH_ECCENTRICITY;LOW_LUMINANCE");
    }

    #[test]
    fn thresholds_are_strict() {
        assert_eq!(apply_gates(0.65, 50.0, &GateConfig::default()).status, Status::OK);
    }

    proptest! {
        #[test]
        fn monotone(e in 0.0f64..1.0, b in 0.0f64..255.0, de in 0.0f64..0.5, db in 0.0f64..100.0) {
            let g = GateConfig::default();
            if apply_gates(e, b, &g).status == Status::OK {
                prop_assert_eq!(apply_gates((e - de).max(0.0), b + db, &g).status, Status::OK);
            }
            let v = apply_gates(e, b, &g);
            prop_assert_eq!(v.status == Status::OK, v.reasons.is_empty());
        }
    }
}
