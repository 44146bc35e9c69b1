//! Batch processing of a manifest, IoPV pairing, evaluation against ground
//! truth and quality-control summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::evalmetrics::{aggregate, iou, mean_accuracy, one_r_bin, point_error, OneRBin, OneRScore, Summary};
use crate::imgio::{load_mask, write_records, FoveaSource, ManifestEntry};
use crate::maskops::{centroid, fit_ellipse};
use crate::overlay::{write_panels, ReferenceStats};
use crate::pallor::iopv;
use crate::pipeline::process_entry;
use crate::providers::SegmentationProvider;
use crate::types::{IoPvRecord, Laterality, PallorRecord, Status};
use crate::{Ellipse, Point};

#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    pub overlays: bool,
    pub reference: Option<ReferenceStats>,
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    /// Sorted by image id.
    pub records: Vec<PallorRecord>,
    pub iopv: Vec<IoPvRecord>,
    pub pallor_csv: PathBuf,
    pub iopv_csv: PathBuf,
    pub quality_csv: PathBuf,
    pub run_json: PathBuf,
    pub total_ms: f64,
}

impl BatchReport {
    /// 0 when at least one image is OK, otherwise 1.
    pub fn exit_code(&self) -> i32 {
        if self.records.iter().any(|r| r.status == Status::OK) {
            0
        } else {
            1
        }
    }
}

/// Pairs OD and OS records of each subject. Only OK records take part; when
/// an eye has several, the first by image id is used.
pub fn pair_iopv(records: &[PallorRecord]) -> Vec<IoPvRecord> {
    let mut eyes: BTreeMap<&str, (Option<&PallorRecord>, Option<&PallorRecord>)> = BTreeMap::new();
    let mut sorted: Vec<&PallorRecord> = records.iter().filter(|r| r.status == Status::OK).collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    for r in sorted {
        let slot = eyes.entry(r.subject_id.as_str()).or_default();
        match r.laterality {
            Laterality::OS if slot.0.is_none() => slot.0 = Some(r),
            Laterality::OD if slot.1.is_none() => slot.1 = Some(r),
            _ => {}
        }
    }
    eyes.into_values()
        .filter_map(|pair| match pair {
            (Some(l), Some(r)) => match iopv(l, r) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("subject {}: no IoPV ({e})", l.subject_id);
                    None
                }
            },
            _ => None,
        })
        .collect()
}

#[derive(Serialize)]
struct RunImage<'a> {
    image_id: &'a str,
    status: String,
    proc_time_ms: f64,
}

#[derive(Serialize)]
struct RunInfo<'a> {
    version: &'static str,
    config: &'a PipelineConfig,
    images: usize,
    ok: usize,
    rejected: usize,
    failed: usize,
    total_ms: f64,
    per_image: Vec<RunImage<'a>>,
}

fn write_quality_csv(records: &[PallorRecord], path: &Path) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    wtr.write_record(["image_id", "status", "reasons", "missing_zones"])?;
    for r in records {
        let missing: Vec<&str> = r.missing_zones.iter().map(|z| z.as_str()).collect();
        wtr.write_record([r.image_id.as_str(), r.status.as_str(), r.reject_reason.as_str(), &missing.join(";")])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Processes every entry and writes `pallor.csv`, `iopv.csv`, `quality.csv`
/// and `run.json` (plus `overlays/` when asked) into `out_dir`.
pub fn run_batch(
    entries: &[ManifestEntry],
    provider: &dyn SegmentationProvider,
    cfg: &PipelineConfig,
    out_dir: &Path,
    opts: &BatchOptions,
) -> Result<BatchReport> {
    if entries.is_empty() {
        return Err(Error::EmptyList);
    }
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let overlay_dir = out_dir.join("overlays");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut records: Vec<PallorRecord> = pool.install(|| {
        entries
            .par_iter()
            .map(|e| {
                let out = process_entry(e, provider, cfg);
                if opts.overlays {
                    if let Some(d) = &out.details {
                        if let Err(err) = write_panels(&overlay_dir, &out.record, d, opts.reference.as_ref(), cfg) {
                            log::warn!("{}: overlays not written: {err}", e.image_id);
                        }
                    }
                }
                out.record
            })
            .collect()
    });
    records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let total_ms = started.elapsed().as_secs_f64() * 1000.0;

    let iopv = pair_iopv(&records);
    let (pallor_csv, iopv_csv) = write_records(&records, &iopv, out_dir)?;
    let quality_csv = out_dir.join("quality.csv");
    write_quality_csv(&records, &quality_csv)?;

    let count = |s: Status| records.iter().filter(|r| r.status == s).count();
    let info = RunInfo {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        images: records.len(),
        ok: count(Status::OK),
        rejected: count(Status::REJECTED),
        failed: count(Status::FAILED),
        total_ms,
        per_image: records
            .iter()
            .map(|r| RunImage { image_id: &r.image_id, status: r.status.to_string(), proc_time_ms: r.proc_time_ms })
            .collect(),
    };
    let run_json = out_dir.join("run.json");
    fs::write(&run_json, serde_json::to_string_pretty(&info)?)?;

    Ok(BatchReport { records, iopv, pallor_csv, iopv_csv, quality_csv, run_json, total_ms })
}

/// Evaluation of predicted disc masks and fovea points for one image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub image_id: String,
    pub iou: Option<f64>,
    pub accuracy: Option<f64>,
    pub fovea_ed_px: Option<f64>,
    pub fovea_ed_pct_disc: Option<f64>,
    pub one_r: Option<OneRBin>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub one_r: Option<OneRScore>,
}

fn fovea_point(src: &FoveaSource) -> Result<Point> {
    match src {
        FoveaSource::Point(p) => Ok(*p),
        FoveaSource::Mask(path) => centroid(&load_mask(path)?),
    }
}

fn evaluate_one(pred: Option<&ManifestEntry>, gt: &ManifestEntry) -> Result<EvalRow> {
    let mut row = EvalRow {
        image_id: gt.image_id.clone(),
        iou: None,
        accuracy: None,
        fovea_ed_px: None,
        fovea_ed_pct_disc: None,
        one_r: None,
    };
    let Some(pred) = pred else {
        log::warn!("{}: no prediction", gt.image_id);
        return Ok(row);
    };
    let mut gt_ellipse: Option<Ellipse> = None;
    if let (Some(pp), Some(gp)) = (&pred.disc_mask_path, &gt.disc_mask_path) {
        let (p, g) = (load_mask(pp)?, load_mask(gp)?);
        row.iou = Some(iou(&p, &g)?);
        row.accuracy = mean_accuracy(&p, &g).ok();
        gt_ellipse = fit_ellipse(&g).ok();
    }
    if let (Some(pf), Some(gf)) = (&pred.fovea, &gt.fovea) {
        let (p, g) = (fovea_point(pf)?, fovea_point(gf)?);
        let major = gt_ellipse.map(|e| e.major_axis_len);
        let e = point_error(p, g, major);
        row.fovea_ed_px = Some(e.ed);
        row.fovea_ed_pct_disc = e.pct_of_disc;
        row.one_r = major.map(|m| one_r_bin(p, g, m / 2.0));
    }
    Ok(row)
}

/// Compares predictions to ground truth, matched by image id.
pub fn evaluate(pred: &[ManifestEntry], gt: &[ManifestEntry]) -> Result<EvalReport> {
    if gt.is_empty() {
        return Err(Error::EmptyList);
    }
    let by_id: BTreeMap<&str, &ManifestEntry> = pred.iter().map(|e| (e.image_id.as_str(), e)).collect();
    let rows = gt.iter().map(|g| evaluate_one(by_id.get(g.image_id.as_str()).copied(), g)).collect::<Result<Vec<_>>>()?;
    let bins: Vec<OneRBin> = rows.iter().filter_map(|r| r.one_r).collect();
    Ok(EvalReport { one_r: OneRScore::from_bins(&bins).ok(), rows })
}

/// Writes per-image rows followed by MEAN, SD and MEDIAN rows.
pub fn write_eval_csv(report: &EvalReport, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    wtr.write_record(["image_id", "iou", "accuracy", "fovea_ed_px", "fovea_ed_pct_disc", "one_r"])?;
    let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in &report.rows {
        wtr.write_record([
            r.image_id.clone(),
            f(r.iou),
            f(r.accuracy),
            f(r.fovea_ed_px),
            f(r.fovea_ed_pct_disc),
            r.one_r.map(|b| b.as_str().to_string()).unwrap_or_default(),
        ])?;
    }
    let cols: [fn(&EvalRow) -> Option<f64>; 4] =
        [|r| r.iou, |r| r.accuracy, |r| r.fovea_ed_px, |r| r.fovea_ed_pct_disc];
    let summaries: Vec<Option<Summary<f64>>> = cols
        .iter()
        .map(|c| aggregate(&report.rows.iter().filter_map(c).collect::<Vec<_>>()).ok())
        .collect();
    let one_r = report.one_r.map(|s| format!("{:.4}/{:.4}/{:.4}", s.within_q25, s.within_q50, s.within_r1));
    for (label, pick) in [("MEAN", 0usize), ("SD", 1), ("MEDIAN", 2)] {
        let mut row = vec![label.to_string()];
        row.extend(summaries.iter().map(|s| f(s.map(|s| [s.mean, s.sd, s.median][pick]))));
        row.push(if pick == 0 { one_r.clone().unwrap_or_default() } else { String::new() });
        wtr.write_record(row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Counts and covariate summaries of a results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QcSummary {
    pub images: usize,
    pub status: BTreeMap<String, usize>,
    pub reasons: BTreeMap<String, usize>,
    pub eccentricity: Option<Summary<f64>>,
    pub control_brightness: Option<Summary<f64>>,
}

pub fn qc_summary(records: &[PallorRecord]) -> QcSummary {
    let mut status = BTreeMap::new();
    let mut reasons = BTreeMap::new();
    for r in records {
        *status.entry(r.status.to_string()).or_insert(0) += 1;
        for reason in r.reject_reason.split(';').filter(|s| !s.is_empty()) {
            *reasons.entry(reason.to_string()).or_insert(0) += 1;
        }
    }
    let measured: Vec<&PallorRecord> = records.iter().filter(|r| r.status != Status::FAILED).collect();
    let ecc: Vec<f64> = measured.iter().filter_map(|r| r.eccentricity).collect();
    let bright: Vec<f64> = measured.iter().filter_map(|r| r.control_brightness).collect();
    QcSummary {
        images: records.len(),
        status,
        reasons,
        eccentricity: aggregate(&ecc).ok(),
        control_brightness: aggregate(&bright).ok(),
    }
}

impl fmt::Display for QcSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "images: {}", self.images)?;
        for (k, v) in &self.status {
            writeln!(f, "  {k}: {v}")?;
        }
        if !self.reasons.is_empty() {
            writeln!(f, "reasons:")?;
            for (k, v) in &self.reasons {
                writeln!(f, "  {k}: {v}")?;
            }
        }
        for (name, s) in [("eccentricity", &self.eccentricity), ("control_brightness", &self.control_brightness)] {
            if let Some(s) = s {
                writeln!(f, "{name}: mean {:.4} sd {:.4} median {:.4} (n={})", s.mean, s.sd, s.median, s.n)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Zone;

    fn rec(id: &str, subj: &str, lat: Laterality, v: f64) -> PallorRecord {
        let mut r = PallorRecord::failed(id, subj, "x");
        r.status = Status::OK;
        r.reject_reason.clear();
        r.laterality = lat;
        for z in Zone::ALL {
            r.pallor.set(z, Some(v));
        }
        r
    }

    #[test]
    fn pairing() {
        let recs = vec![
            rec("a1", "s1", Laterality::OD, 1.0),
            rec("a2", "s1", Laterality::OS, 1.1),
            rec("a0", "s1", Laterality::OS, 1.2),
            rec("b1", "s2", Laterality::OD, 1.0),
            rec("c1", "s3", Laterality::UNKNOWN, 1.0),
        ];
        let v = pair_iopv(&recs);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].subject_id, "s1");
        // a0 sorts first among the OS images.
        assert!((v[0].iopv - 6.0 * 0.2).abs() < 1e-12);
    }

    #[test]
    fn qc_counts() {
        let mut a = rec("a", "a", Laterality::OD, 1.0);
        a.eccentricity = Some(0.3);
        a.control_brightness = Some(90.0);
        let mut b = a.clone();
        b.status = Status::REJECTED;
        b.reject_reason = "HIGH_ECCENTRICITY;LOW_LUMINANCE".into();
        b.eccentricity = Some(0.7);
        let c = PallorRecord::failed("c", "c", "DISC_NOT_FOUND");
        let q = qc_summary(&[a, b, c]);
        assert_eq!(q.status["OK"], 1);
        assert_eq!(q.status["FAILED"], 1);
        assert_eq!(q.reasons["LOW_LUMINANCE"], 1);
        assert_eq!(q.reasons["DISC_NOT_FOUND"], 1);
        assert!((q.eccentricity.unwrap().mean - 0.5).abs() < 1e-12);
        assert!(q.to_string().contains("HIGH_ECCENTRICITY: 1"));
    }
}
