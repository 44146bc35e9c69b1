//! Image decoding/encoding, batch manifests and result files.

use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageError, ImageFormat};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, FundusImage};
use crate::types::{IoPvRecord, Laterality, PallorRecord, Status, Zone, ZoneValues};
use crate::Point;

/// Column order of `pallor.csv`.
pub const PALLOR_COLUMNS: [&str; 18] = [
    "image_id",
    "eye",
    "status",
    "reject_reason",
    "disc_area_px",
    "eccentricity",
    "control_brightness",
    "pallor_T",
    "pallor_TI",
    "pallor_NI",
    "pallor_N",
    "pallor_NS",
    "pallor_TS",
    "pallor_PMB",
    "pallor_global",
    "pallor_whole_disc",
    "nt_ratio",
    "proc_time_ms",
];

/// Column order of `iopv.csv`.
pub const IOPV_COLUMNS: [&str; 8] = ["subject_id", "d_T", "d_TI", "d_NI", "d_N", "d_NS", "d_TS", "iopv"];

const IOPV_ZONES: [Zone; 6] = [Zone::T, Zone::TI, Zone::NI, Zone::N, Zone::NS, Zone::TS];

fn map_image_error(e: ImageError) -> Error {
    match e {
        ImageError::Unsupported(_) => Error::UnsupportedFormat,
        other => Error::CorruptFile(other.to_string()),
    }
}

/// Decodes PNG, JPEG, BMP or TIFF bytes into an 8-bit RGB raster.
///
/// Greyscale sources are replicated across channels and alpha is dropped.
pub fn decode_image(bytes: &[u8]) -> Result<FundusImage> {
    let format = image::guess_format(bytes).map_err(|_| Error::UnsupportedFormat)?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg | ImageFormat::Bmp | ImageFormat::Tiff) {
        return Err(Error::UnsupportedFormat);
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(map_image_error)?;
    dynamic_to_rgb(img)
}

fn dynamic_to_rgb(img: DynamicImage) -> Result<FundusImage> {
    let rgb = img.into_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.pixels().map(|p| p.0).collect();
    FundusImage::from_vec(w, h, data)
}

pub fn load_image(path: &Path) -> Result<FundusImage> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_image(&bytes)
}

/// Loads a mask sidecar; a pixel is foreground when its luma is at least 128.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let format = image::guess_format(&bytes).map_err(|_| Error::UnsupportedFormat)?;
    let img = image::load_from_memory_with_format(&bytes, format).map_err(map_image_error)?;
    let luma = img.into_luma8();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    BinaryMask::from_vec(w, h, luma.pixels().map(|p| p.0[0] >= 128).collect())
}

/// Rasters that can be written losslessly as PNG.
pub trait PngEncode {
    fn encode_png(&self) -> Result<Vec<u8>>;
}

impl PngEncode for FundusImage {
    fn encode_png(&self) -> Result<Vec<u8>> {
        let buf: Vec<u8> = self.as_slice().iter().flat_map(|p| p.iter().copied()).collect();
        let img = image::RgbImage::from_raw(self.width() as u32, self.height() as u32, buf)
            .ok_or(Error::InvalidDimensions { width: self.width(), height: self.height() })?;
        write_png(DynamicImage::ImageRgb8(img))
    }
}

/// Masks are written as single-channel PNGs with values {0, 255}.
impl PngEncode for BinaryMask {
    fn encode_png(&self) -> Result<Vec<u8>> {
        let buf: Vec<u8> = self.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(self.width() as u32, self.height() as u32, buf)
            .ok_or(Error::InvalidDimensions { width: self.width(), height: self.height() })?;
        write_png(DynamicImage::ImageLuma8(img))
    }
}

fn write_png(img: DynamicImage) -> Result<Vec<u8>> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::InvalidDimensions { width: img.width() as usize, height: img.height() as usize });
    }
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).map_err(map_image_error)?;
    Ok(out.into_inner())
}

pub fn encode_png<R: PngEncode>(raster: &R) -> Result<Vec<u8>> {
    raster.encode_png()
}

pub fn save_png<R: PngEncode>(raster: &R, path: &Path) -> Result<()> {
    fs::write(path, raster.encode_png()?)?;
    Ok(())
}

/// Fovea annotation carried by a manifest row.
#[derive(Debug, Clone, PartialEq)]
pub enum FoveaSource {
    Point(Point),
    Mask(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub image_path: PathBuf,
    pub disc_mask_path: Option<PathBuf>,
    pub vessel_mask_path: Option<PathBuf>,
    pub fovea: Option<FoveaSource>,
    pub subject_id: String,
    pub expected_laterality: Option<Laterality>,
}

impl ManifestEntry {
    pub fn new(image_id: impl Into<String>, image_path: impl Into<PathBuf>) -> Self {
        let image_id = image_id.into();
        Self {
            subject_id: image_id.clone(),
            image_id,
            image_path: image_path.into(),
            disc_mask_path: None,
            vessel_mask_path: None,
            fovea: None,
            expected_laterality: None,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    image_path: String,
    #[serde(default)]
    image_id: Option<String>,
    #[serde(default)]
    disc_mask_path: Option<String>,
    #[serde(default)]
    vessel_mask_path: Option<String>,
    #[serde(default)]
    fovea_point: Option<String>,
    #[serde(default)]
    fovea_mask_path: Option<String>,
    #[serde(default)]
    subject_id: Option<String>,
    #[serde(default)]
    expected_laterality: Option<String>,
}

/// Parses `"x,y"` (whitespace and surrounding parentheses tolerated).
pub fn parse_point(s: &str) -> Option<Point> {
    let s = s.trim().trim_start_matches('(').trim_end_matches(')');
    let (x, y) = s.split_once(',')?;
    let p = Point::new(x.trim().parse().ok()?, y.trim().parse().ok()?);
    p.is_finite().then_some(p)
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.map(|v| v.trim().to_string()).filter(|v| !v.is_empty())
}

/// Reads a CSV manifest. Relative paths resolve against the manifest's directory;
/// unknown columns are ignored.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    parse_manifest(file, &base)
}

pub fn parse_manifest<R: std::io::Read>(reader: R, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    if !rdr.headers()?.iter().any(|h| h == "image_path") {
        return Err(Error::MissingColumn("image_path"));
    }
    let resolve = |p: String| -> PathBuf {
        let p = PathBuf::from(p);
        if p.is_absolute() { p } else { base.join(p) }
    };
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ManifestRow>().enumerate() {
        let row_no = i + 2;
        let row = row?;
        let image_path = row.image_path.trim().to_string();
        if image_path.is_empty() {
            return Err(Error::ManifestRow { row: row_no, msg: "empty image_path".into() });
        }
        let image_id = non_empty(row.image_id).unwrap_or_else(|| {
            Path::new(&image_path).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        });
        if !seen.insert(image_id.clone()) {
            return Err(Error::DuplicateImageId(image_id));
        }
        let fovea = match (non_empty(row.fovea_point), non_empty(row.fovea_mask_path)) {
            (Some(p), _) => Some(FoveaSource::Point(parse_point(&p).ok_or_else(|| Error::ManifestRow {
                row: row_no,
                msg: format!("cannot parse fovea_point `{p}`"),
            })?)),
            (None, Some(m)) => Some(FoveaSource::Mask(resolve(m))),
            (None, None) => None,
        };
        let expected_laterality = match non_empty(row.expected_laterality) {
            Some(s) => {
                let lat = s.parse::<Laterality>().map_err(|msg| Error::ManifestRow { row: row_no, msg })?;
                (lat != Laterality::UNKNOWN).then_some(lat)
            }
            None => None,
        };
        out.push(ManifestEntry {
            subject_id: non_empty(row.subject_id).unwrap_or_else(|| image_id.clone()),
            image_id,
            image_path: resolve(image_path),
            disc_mask_path: non_empty(row.disc_mask_path).map(&resolve),
            vessel_mask_path: non_empty(row.vessel_mask_path).map(&resolve),
            fovea,
            expected_laterality,
        });
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// One `pallor.csv` row. FAILED records carry empty pallor fields.
pub fn pallor_row(r: &PallorRecord) -> Vec<String> {
    let measured = r.status != Status::FAILED;
    let p = |v: Option<f64>| if measured { fmt_opt(v) } else { String::new() };
    let mut row = vec![
        r.image_id.clone(),
        r.laterality.to_string(),
        r.status.to_string(),
        r.reject_reason.clone(),
        r.disc_area.map(|a| a.to_string()).unwrap_or_default(),
        fmt_opt(r.eccentricity),
        fmt_opt(r.control_brightness),
    ];
    row.extend(Zone::OUTPUT_ORDER.iter().map(|&z| p(r.pallor.get(z))));
    row.push(p(r.pallor_global));
    row.push(p(r.pallor_whole_disc));
    row.push(p(r.nt_ratio));
    row.push(format!("{:.6}", r.proc_time_ms));
    row
}

pub fn write_pallor_csv<W: Write>(records: &[PallorRecord], w: W) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(PALLOR_COLUMNS)?;
    for r in records {
        wtr.write_record(pallor_row(r))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_iopv_csv<W: Write>(iopv: &[IoPvRecord], w: W) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(IOPV_COLUMNS)?;
    for r in iopv {
        let mut row = vec![r.subject_id.clone()];
        row.extend(IOPV_ZONES.iter().map(|&z| fmt_opt(r.diff(z))));
        row.push(format!("{:.6}", r.iopv));
        wtr.write_record(row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `pallor.csv` and `iopv.csv` into `dir`.
pub fn write_records(records: &[PallorRecord], iopv: &[IoPvRecord], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if records.is_empty() {
        return Err(Error::EmptyList);
    }
    fs::create_dir_all(dir)?;
    let pallor_path = dir.join("pallor.csv");
    let iopv_path = dir.join("iopv.csv");
    write_pallor_csv(records, fs::File::create(&pallor_path)?)?;
    write_iopv_csv(iopv, fs::File::create(&iopv_path)?)?;
    Ok((pallor_path, iopv_path))
}

/// Reads a `pallor.csv` back into records (subject ids are not stored and come back empty).
pub fn read_pallor_csv(path: &Path) -> Result<Vec<PallorRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &'static str| headers.iter().position(|h| h == name).ok_or(Error::MissingColumn(name));
    let idx: Vec<usize> = PALLOR_COLUMNS.iter().map(|&c| col(c)).collect::<Result<_>>()?;
    let num = |s: &str| -> Option<f64> { s.trim().parse().ok() };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let bad = |msg: String| Error::ManifestRow { row: i + 2, msg };
        let mut r = PallorRecord::failed(field(0), "", "x");
        r.laterality = field(1).parse().map_err(bad)?;
        r.status = field(2).parse().map_err(bad)?;
        r.reject_reason = field(3).to_string();
        r.disc_area = field(4).trim().parse().ok();
        r.eccentricity = num(field(5));
        r.control_brightness = num(field(6));
        r.pallor = ZoneValues::from_fn(|z| {
            let k = 7 + Zone::OUTPUT_ORDER.iter().position(|&o| o == z).unwrap();
            num(field(k))
        });
        r.pallor_global = num(field(14));
        r.pallor_whole_disc = num(field(15));
        r.nt_ratio = num(field(16));
        r.proc_time_ms = num(field(17)).unwrap_or(0.0);
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok_record() -> PallorRecord {
        let mut r = PallorRecord::failed("img1", "s1", "x");
        r.status = Status::OK;
        r.reject_reason.clear();
        r.laterality = Laterality::OD;
        r.pallor = ZoneValues::from_fn(|_| Some(1.125));
        r.pallor_global = Some(1.125);
        r.pallor_whole_disc = Some(1.0);
        r.nt_ratio = Some(1.0);
        r.disc_area = Some(73900);
        r.eccentricity = Some(0.25);
        r.control_brightness = Some(91.6);
        r.proc_time_ms = 12.5;
        r
    }

    #[test]
    fn png_single_pixel_round_trip() {
        let img = FundusImage::filled(1, 1, [10, 20, 30]).unwrap();
        let bytes = encode_png(&img).unwrap();
        let back = decode_image(&bytes).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn mask_png_is_single_channel_0_255() {
        let m = BinaryMask::from_fn(4, 3, |x, y| (x + y) % 2 == 0).unwrap();
        let bytes = encode_png(&m).unwrap();
        let raw = image::load_from_memory(&bytes).unwrap();
        assert_eq!(raw.color(), image::ColorType::L8);
        let vals: std::collections::BTreeSet<u8> = raw.to_luma8().pixels().map(|p| p.0[0]).collect();
        assert_eq!(vals.into_iter().collect::<Vec<_>>(), vec![0, 255]);
        let tmp = tempfile::NamedTempFile::new().unwrap();
        fs::write(tmp.path(), &bytes).unwrap();
        assert_eq!(load_mask(tmp.path()).unwrap(), m);
    }

    #[test]
    fn bmp_and_tiff_round_trip() {
        let img = FundusImage::from_fn(7, 5, |x, y| [x as u8 * 30, y as u8 * 40, 200]).unwrap();
        for fmt in [ImageFormat::Bmp, ImageFormat::Tiff] {
            let buf: Vec<u8> = img.as_slice().iter().flat_map(|p| p.iter().copied()).collect();
            let rgb = image::RgbImage::from_raw(7, 5, buf).unwrap();
            let mut out = Cursor::new(Vec::new());
            rgb.write_to(&mut out, fmt).unwrap();
            assert_eq!(decode_image(out.get_ref()).unwrap(), img, "{fmt:?}");
        }
    }

    #[test]
    fn full_size_bmp_keeps_dimensions() {
        let rgb = image::RgbImage::from_fn(3072, 2048, |x, y| image::Rgb([(x % 251) as u8, (y % 241) as u8, 7]));
        let mut out = Cursor::new(Vec::new());
        rgb.write_to(&mut out, ImageFormat::Bmp).unwrap();
        let img = decode_image(out.get_ref()).unwrap();
        assert_eq!(img.dims(), (3072, 2048));
        assert_eq!(img.get(3071, 2047), [(3071 % 251) as u8, (2047 % 241) as u8, 7]);
    }

    #[test]
    fn grey_and_alpha_normalized_to_rgb() {
        let g = image::GrayImage::from_raw(2, 1, vec![7, 250]).unwrap();
        let mut out = Cursor::new(Vec::new());
        g.write_to(&mut out, ImageFormat::Png).unwrap();
        let img = decode_image(out.get_ref()).unwrap();
        assert_eq!(img.as_slice(), &[[7, 7, 7], [250, 250, 250]]);

        let a = image::RgbaImage::from_raw(1, 1, vec![1, 2, 3, 0]).unwrap();
        let mut out = Cursor::new(Vec::new());
        a.write_to(&mut out, ImageFormat::Png).unwrap();
        assert_eq!(decode_image(out.get_ref()).unwrap().get(0, 0), [1, 2, 3]);
    }

    #[test]
    fn truncated_jpeg_is_corrupt() {
        let img = image::RgbImage::from_fn(64, 64, |x, y| image::Rgb([x as u8 * 4, y as u8 * 4, 99]));
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Jpeg).unwrap();
        let bytes = out.into_inner();
        assert_eq!(decode_image(&bytes).unwrap().dims(), (64, 64));
        let cut = &bytes[..bytes.len() / 3];
        assert!(matches!(decode_image(cut), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn unknown_bytes_unsupported() {
        assert!(matches!(decode_image(b"hello world, not an image"), Err(Error::UnsupportedFormat)));
    }

    #[test]
    fn manifest_parsing() {
        let text = "image_path,subject_id,fovea_point,extra\n\
                    a.png,s1,\"812.5,1033.0\",zzz\n\
                    sub/b.png,s1,,\n";
        let entries = parse_manifest(text.as_bytes(), Path::new("/data")).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].image_id, "a");
        assert_eq!(entries[0].fovea, Some(FoveaSource::Point(Point::new(812.5, 1033.0))));
        assert_eq!(entries[1].image_path, PathBuf::from("/data/sub/b.png"));
        assert_eq!(entries[1].fovea, None);
        assert_eq!(entries[1].subject_id, "s1");
    }

    #[test]
    fn manifest_errors() {
        let missing = "disc_mask_path\nx.png\n";
        assert!(matches!(parse_manifest(missing.as_bytes(), Path::new(".")), Err(Error::MissingColumn("image_path"))));
        let dup = "image_path\nd1/a.png\nd2/a.png\n";
        assert!(matches!(parse_manifest(dup.as_bytes(), Path::new(".")), Err(Error::DuplicateImageId(id)) if id == "a"));
    }

    #[test]
    fn pallor_csv_layout() {
        let mut buf = Vec::new();
        write_pallor_csv(&[ok_record()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], PALLOR_COLUMNS.join(","));
        assert_eq!(
            lines[1],
            "img1,OD,OK,,73900,0.250000,91.600000,1.125000,1.125000,1.125000,1.125000,1.125000,1.125000,1.125000,\
             1.125000,1.000000,1.000000,12.500000"
        );
        assert!(!text.contains('\r'));
    }

    #[test]
    fn failed_record_has_empty_pallor_fields() {
        let r = PallorRecord::failed("bad", "s", "DISC_NOT_FOUND");
        let row = pallor_row(&r);
        assert_eq!(row[2], "FAILED");
        assert_eq!(row[3], "DISC_NOT_FOUND");
        assert!(row[7..17].iter().all(String::is_empty));
    }

    #[test]
    fn iopv_zero_row() {
        let rec = IoPvRecord { subject_id: "s1".into(), diffs: [0.0; 6], iopv: 0.0 };
        let mut buf = Vec::new();
        write_iopv_csv(&[rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), IOPV_COLUMNS.join(","));
        assert!(text.lines().nth(1).unwrap().ends_with(",0.000000"));
    }

    #[test]
    fn write_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![ok_record(), PallorRecord::failed("bad", "s", "FOVEA_NOT_FOUND")];
        write_records(&recs, &[], dir.path()).unwrap();
        let back = read_pallor_csv(&dir.path().join("pallor.csv")).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].pallor_global, Some(1.125));
        assert_eq!(back[1].status, Status::FAILED);
        assert!(matches!(write_records(&[], &[], dir.path()), Err(Error::EmptyList)));
    }
}
