//! Frame files and dataset directories.
//!
//! Text frames are comma-separated:
//!
//! ```text
//! # scale=255
//! # frame_id=12
//! # timestamp_us=1200000
//! range_m,azimuth_deg,elevation_deg,intensity_raw
//! 12.5,45.0,-3.0,128
//! ```
//!
//! `#` lines are comments; `scale`, `frame_id` and `timestamp_us` pragmas are
//! optional (scale defaults to 255). Raw intensities are divided by the scale.
//!
//! Binary frames are little-endian: a 16-byte header (`PCQ1`, u16 version,
//! u16 reserved, u32 rows, u32 cols) then `rows * cols` records of four f32
//! values (range, azimuth, elevation, normalized intensity). A range of 0
//! marks an empty slot.
//!
//! A dataset is a flat directory of `frame_<id>.pcq` / `frame_<id>.csv` files
//! plus an optional `manifest` of `key=value` lines (`profile`, `rate_hz`,
//! `start_us`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::metric::{MetricError, PolarPoint};

pub const BINARY_MAGIC: [u8; 4] = *b"PCQ1";
pub const BINARY_VERSION: u16 = 1;
pub const BINARY_HEADER_LEN: usize = 16;
pub const BINARY_RECORD_LEN: usize = 16;
pub const TEXT_HEADER: &str = "range_m,azimuth_deg,elevation_deg,intensity_raw";
pub const DEFAULT_RAW_SCALE: f64 = 255.0;
pub const MANIFEST_FILE: &str = "manifest";
/// Nominal sensor frame rate.
pub const DEFAULT_RATE_HZ: f64 = 10.0;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Range { line: usize, source: MetricError },
    #[error("invalid binary frame: {0}")]
    Format(String),
    #[error("truncated binary frame: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("frame holds {points} points but a {rows}x{cols} array has {capacity} slots")]
    Capacity {
        points: usize,
        rows: usize,
        cols: usize,
        capacity: usize,
    },
    #[error("no frame files in {0}")]
    EmptyDataset(PathBuf),
    #[error("frame id {id} appears in both {first} and {second}")]
    DuplicateFrameId {
        id: u64,
        first: PathBuf,
        second: PathBuf,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<IoError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IoError {
    fn in_file(self, path: &Path) -> Self {
        IoError::File {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }
}

/// One sensor frame. `points` may include range-0 sentinel slots.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub timestamp_us: u64,
    pub points: Vec<PolarPoint>,
}

impl FrameRecord {
    pub fn new(frame_id: u64, timestamp_us: u64, points: Vec<PolarPoint>) -> Self {
        Self {
            frame_id,
            timestamp_us,
            points,
        }
    }

    pub fn valid_points(&self) -> impl Iterator<Item = &PolarPoint> {
        self.points.iter().filter(|p| p.is_valid())
    }

    pub fn valid_count(&self) -> usize {
        self.valid_points().count()
    }
}

fn parse_pragma(body: &str) -> Option<(&str, &str)> {
    let (key, value) = body.trim().split_once('=')?;
    Some((key.trim(), value.trim()))
}

/// Parses a text frame.
pub fn read_frame_text(bytes: &[u8]) -> Result<FrameRecord, IoError> {
    let text = std::str::from_utf8(bytes).map_err(|e| IoError::Parse {
        line: 1,
        message: format!("not UTF-8: {e}"),
    })?;
    let mut scale = DEFAULT_RAW_SCALE;
    let mut frame_id = 0u64;
    let mut timestamp_us = 0u64;
    let mut seen_header = false;
    let mut points = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(body) = line.strip_prefix('#') {
            let parse_err = |what: &str, v: &str| IoError::Parse {
                line: line_no,
                message: format!("bad {what} pragma value {v:?}"),
            };
            match parse_pragma(body) {
                Some(("scale", v)) => {
                    scale = v.parse().map_err(|_| parse_err("scale", v))?;
                    if !(scale.is_finite() && scale > 0.0) {
                        return Err(parse_err("scale", v));
                    }
                }
                Some(("frame_id", v)) => frame_id = v.parse().map_err(|_| parse_err("frame_id", v))?,
                Some(("timestamp_us", v)) => {
                    timestamp_us = v.parse().map_err(|_| parse_err("timestamp_us", v))?
                }
                _ => {}
            }
            continue;
        }
        if !seen_header {
            let normalized: String = line.chars().filter(|c| !c.is_whitespace()).collect();
            if normalized != TEXT_HEADER {
                return Err(IoError::Parse {
                    line: line_no,
                    message: format!("expected header {TEXT_HEADER:?}, found {line:?}"),
                });
            }
            seen_header = true;
            continue;
        }
        points.push(parse_row(line, line_no, scale)?);
    }
    if !seen_header {
        return Err(IoError::Parse {
            line: text.lines().count().max(1),
            message: format!("missing header {TEXT_HEADER:?}"),
        });
    }
    Ok(FrameRecord {
        frame_id,
        timestamp_us,
        points,
    })
}

fn parse_row(line: &str, line_no: usize, scale: f64) -> Result<PolarPoint, IoError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(IoError::Parse {
            line: line_no,
            message: format!("expected 4 fields, found {}", fields.len()),
        });
    }
    let mut values = [0.0f64; 4];
    for (slot, (field, name)) in values
        .iter_mut()
        .zip(fields.iter().zip(["range", "azimuth", "elevation", "intensity"]))
    {
        let v: f64 = field.parse().map_err(|_| IoError::Parse {
            line: line_no,
            message: format!("{name} {field:?} is not a number"),
        })?;
        if !v.is_finite() {
            return Err(IoError::Parse {
                line: line_no,
                message: format!("{name} {field:?} is not finite"),
            });
        }
        *slot = v;
    }
    let [range, azimuth, elevation, raw] = values;
    if !(0.0..=scale).contains(&raw) {
        return Err(IoError::Range {
            line: line_no,
            source: MetricError::OutOfRange {
                field: "intensity",
                value: raw,
                reason: "raw intensity outside [0, scale]",
            },
        });
    }
    let intensity = (raw / scale).min(1.0);
    PolarPoint::new(range, azimuth, elevation, intensity).map_err(|source| IoError::Range { line: line_no, source })
}

/// Canonical text serialization. Intensities are written normalized under a
/// `scale=1` pragma so that parsing reproduces every value exactly.
pub fn write_frame_text(record: &FrameRecord) -> String {
    let mut out = String::with_capacity(64 + record.points.len() * 32);
    out.push_str("# scale=1\n");
    let _ = writeln!(out, "# frame_id={}", record.frame_id);
    let _ = writeln!(out, "# timestamp_us={}", record.timestamp_us);
    out.push_str(TEXT_HEADER);
    out.push('\n');
    for p in &record.points {
        let _ = writeln!(out, "{},{},{},{}", p.range(), p.azimuth(), p.elevation(), p.intensity());
    }
    out
}

fn u16_at(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn f32_at(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Array dimensions stored in a binary frame header.
pub fn binary_dims(bytes: &[u8]) -> Result<(usize, usize), IoError> {
    if bytes.len() < BINARY_HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != BINARY_MAGIC {
            return Err(IoError::Format(format!("bad magic {:?}", &bytes[..4])));
        }
        return Err(IoError::Truncated {
            expected: BINARY_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[..4] != BINARY_MAGIC {
        return Err(IoError::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u16_at(bytes, 4);
    if version != BINARY_VERSION {
        return Err(IoError::Format(format!("unsupported version {version}")));
    }
    Ok((u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize))
}

/// Parses a binary frame; every slot, sentinel or not, becomes one point.
pub fn read_frame_binary(bytes: &[u8]) -> Result<FrameRecord, IoError> {
    let (rows, cols) = binary_dims(bytes)?;
    let slots = rows
        .checked_mul(cols)
        .ok_or_else(|| IoError::Format(format!("array {rows}x{cols} is too large")))?;
    let expected = slots
        .checked_mul(BINARY_RECORD_LEN)
        .and_then(|p| p.checked_add(BINARY_HEADER_LEN))
        .ok_or_else(|| IoError::Format(format!("array {rows}x{cols} is too large")))?;
    if bytes.len() < expected {
        return Err(IoError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IoError::Format(format!(
            "{} trailing bytes after {expected}-byte frame",
            bytes.len() - expected
        )));
    }
    let mut points = Vec::with_capacity(slots);
    for (slot, rec) in bytes[BINARY_HEADER_LEN..].chunks_exact(BINARY_RECORD_LEN).enumerate() {
        let range = f32_at(rec, 0) as f64;
        if range == 0.0 {
            points.push(PolarPoint::sentinel());
            continue;
        }
        let p = PolarPoint::new(
            range,
            f32_at(rec, 4) as f64,
            f32_at(rec, 8) as f64,
            f32_at(rec, 12) as f64,
        )
        .map_err(|e| IoError::Format(format!("slot {slot}: {e}")))?;
        points.push(p);
    }
    Ok(FrameRecord {
        frame_id: 0,
        timestamp_us: 0,
        points,
    })
}

/// Azimuth as stored on disk; rounding up to 360 is folded back to 0.
fn azimuth_f32(azimuth: f64) -> f32 {
    let a = azimuth as f32;
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Rounds a point to the precision of the binary format.
pub fn quantize_f32(p: &PolarPoint) -> PolarPoint {
    if !p.is_valid() {
        return PolarPoint::sentinel();
    }
    let range = (p.range() as f32).max(f32::MIN_POSITIVE) as f64;
    PolarPoint::new(
        range,
        azimuth_f32(p.azimuth()) as f64,
        p.elevation() as f32 as f64,
        (p.intensity() as f32).clamp(0.0, 1.0) as f64,
    )
    .expect("rounded point stays valid")
}

/// Lays the points out row-major in an `rows x cols` array, padding with
/// empty slots.
pub fn write_frame_binary(record: &FrameRecord, rows: usize, cols: usize) -> Result<Vec<u8>, IoError> {
    let capacity = rows.checked_mul(cols).filter(|_| rows <= u32::MAX as usize && cols <= u32::MAX as usize);
    let capacity = capacity.ok_or_else(|| IoError::Format(format!("array {rows}x{cols} is too large")))?;
    if record.points.len() > capacity {
        return Err(IoError::Capacity {
            points: record.points.len(),
            rows,
            cols,
            capacity,
        });
    }
    let mut out = Vec::with_capacity(BINARY_HEADER_LEN + capacity * BINARY_RECORD_LEN);
    out.extend_from_slice(&BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for p in &record.points {
        let fields: [f32; 4] = if p.is_valid() {
            [
                p.range() as f32,
                azimuth_f32(p.azimuth()),
                p.elevation() as f32,
                p.intensity() as f32,
            ]
        } else {
            [0.0; 4]
        };
        for f in fields {
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    out.resize(BINARY_HEADER_LEN + capacity * BINARY_RECORD_LEN, 0);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFormat {
    Text,
    Binary,
}

impl FrameFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(Self::Text),
            "pcq" => Some(Self::Binary),
            _ => None,
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            Self::Text => "csv",
            Self::Binary => "pcq",
        }
    }
}

/// Reads a `.csv` or `.pcq` frame file.
pub fn read_frame_file(path: &Path) -> Result<FrameRecord, IoError> {
    let format = FrameFormat::from_path(path)
        .ok_or_else(|| IoError::Format(format!("{}: unknown frame extension", path.display())))?;
    let bytes = fs::read(path).map_err(|e| IoError::from(e).in_file(path))?;
    match format {
        FrameFormat::Text => read_frame_text(&bytes),
        FrameFormat::Binary => read_frame_binary(&bytes),
    }
    .map_err(|e| e.in_file(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub frame_id: u64,
    pub path: PathBuf,
    pub format: FrameFormat,
}

/// Frame files of a dataset directory in frame-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    /// Sensor profile name, if the directory has a manifest naming one.
    pub profile: Option<String>,
    pub rate_hz: f64,
    pub start_us: u64,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Nominal capture time of a frame.
    pub fn timestamp_us(&self, frame_id: u64) -> u64 {
        self.start_us + (frame_id as f64 * 1e6 / self.rate_hz).round() as u64
    }

    /// Reads one frame, stamping it with its id and nominal timestamp.
    pub fn load(&self, entry: &DatasetEntry) -> Result<FrameRecord, IoError> {
        let mut record = read_frame_file(&entry.path)?;
        record.frame_id = entry.frame_id;
        record.timestamp_us = self.timestamp_us(entry.frame_id);
        Ok(record)
    }

    /// Manifest file contents for this dataset.
    pub fn manifest_text(&self) -> String {
        let mut out = String::from("# pcq dataset manifest\n");
        if let Some(profile) = &self.profile {
            let _ = writeln!(out, "profile={profile}");
        }
        let _ = writeln!(out, "rate_hz={}", self.rate_hz);
        let _ = writeln!(out, "start_us={}", self.start_us);
        out
    }
}

pub fn frame_file_name(frame_id: u64, format: FrameFormat) -> String {
    format!("frame_{frame_id:06}.{}", format.extension())
}

/// Frame id and format from a `frame_<id>.<ext>` file name.
pub fn parse_frame_name(name: &str) -> Option<(u64, FrameFormat)> {
    let stem = name.strip_prefix("frame_")?;
    let (id, ext) = stem.rsplit_once('.')?;
    let format = match ext {
        "csv" => FrameFormat::Text,
        "pcq" => FrameFormat::Binary,
        _ => return None,
    };
    if id.is_empty() || !id.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((id.parse().ok()?, format))
}

fn read_manifest(path: &Path) -> Result<(Option<String>, f64, u64), IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::from(e).in_file(path))?;
    let mut profile = None;
    let mut rate = DEFAULT_RATE_HZ;
    let mut start = 0;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| IoError::Manifest(format!("line {}: {msg}", idx + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, found {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "profile" => profile = Some(value.to_string()),
            "rate_hz" => {
                rate = value.parse().map_err(|_| bad(format!("bad rate_hz {value:?}")))?;
                if !(rate.is_finite() && rate > 0.0) {
                    return Err(bad(format!("rate_hz {value} must be positive")));
                }
            }
            "start_us" => start = value.parse().map_err(|_| bad(format!("bad start_us {value:?}")))?,
            _ => {}
        }
    }
    Ok((profile, rate, start))
}

/// Lists the frame files of a dataset directory.
pub fn scan_dataset(dir: &Path) -> Result<DatasetManifest, IoError> {
    let mut by_id: BTreeMap<u64, DatasetEntry> = BTreeMap::new();
    let listing = fs::read_dir(dir).map_err(|e| IoError::from(e).in_file(dir))?;
    let mut names = Vec::new();
    for item in listing {
        let item = item?;
        if !item.file_type()?.is_file() {
            continue;
        }
        if let Some(name) = item.file_name().to_str() {
            names.push(name.to_string());
        }
    }
    // Directory order is unspecified; sort so duplicate reports are stable.
    names.sort();
    for name in names {
        let Some((frame_id, format)) = parse_frame_name(&name) else {
            continue;
        };
        let path = dir.join(&name);
        if let Some(existing) = by_id.get(&frame_id) {
            return Err(IoError::DuplicateFrameId {
                id: frame_id,
                first: existing.path.clone(),
                second: path,
            });
        }
        by_id.insert(frame_id, DatasetEntry { frame_id, path, format });
    }
    if by_id.is_empty() {
        return Err(IoError::EmptyDataset(dir.to_path_buf()));
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    let (profile, rate_hz, start_us) = if manifest_path.is_file() {
        read_manifest(&manifest_path)?
    } else {
        (None, DEFAULT_RATE_HZ, 0)
    };
    Ok(DatasetManifest {
        profile,
        rate_hz,
        start_us,
        entries: by_id.into_values().collect(),
    })
}
