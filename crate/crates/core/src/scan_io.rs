//! Scan ingestion: KITTI `.bin`, ASCII PCD and the internal `LK3DSCAN` dump.
//!
//! Every reader produces a [`LidarScan`], whose points are grouped by scan line
//! (ring) and ordered by azimuth within each ring. Points that are not finite
//! or that sit closer than the minimum range to the sensor are dropped.

use std::fs;
use std::io::{self, Write};
use std::ops::Range;
use std::path::Path;

use thiserror::Error;

const SCAN_MAGIC: &[u8; 8] = b"LK3DSCAN";
const KITTI_RECORD: usize = 16;
const DUMP_RECORD: usize = 18;

#[derive(Error, Debug)]
pub enum ScanIoError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("truncated record: file size {0} is not a multiple of {1} bytes")]
    Truncated(usize, usize),
    #[error("scan is empty after filtering")]
    EmptyScan,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("malformed data on line {line}: {reason}")]
    MalformedData { line: usize, reason: String },
    #[error("ring index {ring} out of range for {num_rings} rings")]
    RingOutOfRange { ring: u32, num_rings: u32 },
    #[error("invalid ring configuration: {0}")]
    InvalidRingConfig(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ScanIoError + '_ {
    move |source| ScanIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One LiDAR return in the sensor frame. Intensity is carried but unused.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl RawPoint {
    pub fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        RawPoint { x, y, z, intensity }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn range(&self) -> f64 {
        let (x, y, z) = (self.x as f64, self.y as f64, self.z as f64);
        (x * x + y * y + z * z).sqrt()
    }

    pub fn azimuth(&self) -> f64 {
        (self.y as f64).atan2(self.x as f64)
    }

    pub fn to_f64(&self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }
}

/// Vertical layout of a spinning sensor: ring count and elevation field of view
/// in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingConfig {
    pub num_rings: u32,
    pub fov_low: f64,
    pub fov_high: f64,
}

impl RingConfig {
    /// Velodyne HDL-64E layout.
    pub const HDL64: RingConfig = RingConfig {
        num_rings: 64,
        fov_low: -24.8,
        fov_high: 2.0,
    };

    /// Velodyne VLP-16 layout.
    pub const VLP16: RingConfig = RingConfig {
        num_rings: 16,
        fov_low: -15.0,
        fov_high: 15.0,
    };

    /// The 16-ring layout for 16 rings, the 64-ring field of view otherwise.
    pub fn for_rings(num_rings: u32) -> RingConfig {
        if num_rings == 16 {
            RingConfig::VLP16
        } else {
            RingConfig {
                num_rings,
                ..RingConfig::HDL64
            }
        }
    }

    pub fn validate(&self) -> Result<(), ScanIoError> {
        if self.num_rings < 2 || self.num_rings > u16::MAX as u32 + 1 {
            return Err(ScanIoError::InvalidRingConfig(format!("num_rings = {}", self.num_rings)));
        }
        if !(self.fov_low < self.fov_high) {
            return Err(ScanIoError::InvalidRingConfig(format!(
                "fov_low {} must be below fov_high {}",
                self.fov_low, self.fov_high
            )));
        }
        Ok(())
    }

    /// Elevation at the center of a ring's bin, in degrees.
    pub fn ring_center_elevation(&self, ring: u32) -> f64 {
        let width = (self.fov_high - self.fov_low) / self.num_rings as f64;
        self.fov_low + (ring as f64 + 0.5) * width
    }
}

/// Options applied by every file reader.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IngestOptions {
    pub rings: RingConfig,
    /// Points closer than this (meters) are treated as self-returns.
    pub min_range: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            rings: RingConfig::HDL64,
            min_range: 0.5,
        }
    }
}

/// An ordered scan: points grouped by ring, azimuth-sorted within each ring.
#[derive(Clone, Debug, PartialEq)]
pub struct LidarScan {
    points: Vec<RawPoint>,
    rings: Vec<u16>,
    num_rings: u32,
    ring_starts: Vec<usize>,
}

impl LidarScan {
    /// Builds a scan from unordered points and their ring indices.
    ///
    /// Points are stably reordered by `(ring, azimuth)`; ties keep input order.
    pub fn from_points(points: Vec<RawPoint>, rings: Vec<u16>, num_rings: u32) -> Result<Self, ScanIoError> {
        assert_eq!(points.len(), rings.len(), "one ring index per point");
        if let Some(&bad) = rings.iter().find(|&&r| r as u32 >= num_rings) {
            return Err(ScanIoError::RingOutOfRange {
                ring: bad as u32,
                num_rings,
            });
        }
        let mut keys: Vec<(u16, f64, usize)> = points
            .iter()
            .zip(&rings)
            .enumerate()
            .map(|(i, (p, &r))| (r, p.azimuth(), i))
            .collect();
        keys.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        let sorted_points: Vec<RawPoint> = keys.iter().map(|k| points[k.2]).collect();
        let sorted_rings: Vec<u16> = keys.iter().map(|k| k.0).collect();
        Ok(Self::from_sorted(sorted_points, sorted_rings, num_rings))
    }

    fn from_sorted(points: Vec<RawPoint>, rings: Vec<u16>, num_rings: u32) -> Self {
        let mut ring_starts = vec![0usize; num_rings as usize + 1];
        for &r in &rings {
            ring_starts[r as usize + 1] += 1;
        }
        for i in 1..ring_starts.len() {
            ring_starts[i] += ring_starts[i - 1];
        }
        LidarScan {
            points,
            rings,
            num_rings,
            ring_starts,
        }
    }

    pub fn points(&self) -> &[RawPoint] {
        &self.points
    }

    pub fn rings(&self) -> &[u16] {
        &self.rings
    }

    pub fn num_rings(&self) -> u32 {
        self.num_rings
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index range of the points on `ring`; empty when the ring has no points.
    pub fn ring_range(&self, ring: u32) -> Range<usize> {
        let r = ring as usize;
        self.ring_starts[r]..self.ring_starts[r + 1]
    }

    /// Applies `f` to every point, keeping ring assignments, then re-sorts.
    pub fn map_points(&self, f: impl Fn(&RawPoint) -> RawPoint) -> LidarScan {
        let points = self.points.iter().map(f).collect();
        LidarScan::from_points(points, self.rings.clone(), self.num_rings).expect("rings already validated")
    }
}

/// Ring index per point by uniform elevation binning.
///
/// `ring = clamp(floor((elev - fov_low) / (fov_high - fov_low) * num_rings), 0, num_rings - 1)`
/// with `elev = atan2(z, hypot(x, y))` in degrees.
pub fn assign_rings(points: &[RawPoint], num_rings: u32, fov_low: f64, fov_high: f64) -> Vec<u16> {
    debug_assert!(fov_low < fov_high && num_rings >= 2);
    let span = fov_high - fov_low;
    let top = (num_rings - 1) as f64;
    points
        .iter()
        .map(|p| {
            let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
            let elevation = z.atan2((x * x + y * y).sqrt()).to_degrees();
            let bin = ((elevation - fov_low) / span * num_rings as f64).floor();
            bin.clamp(0.0, top) as u16
        })
        .collect()
}

fn filter_and_build(points: Vec<RawPoint>, rings: Option<Vec<u16>>, opts: &IngestOptions) -> Result<LidarScan, ScanIoError> {
    opts.rings.validate()?;
    let keep: Vec<bool> = points.iter().map(|p| p.is_finite() && p.range() >= opts.min_range).collect();
    let kept: Vec<RawPoint> = points.iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect();
    if kept.is_empty() {
        return Err(ScanIoError::EmptyScan);
    }
    let rings = match rings {
        Some(r) => r.into_iter().zip(&keep).filter(|(_, &k)| k).map(|(r, _)| r).collect(),
        None => assign_rings(&kept, opts.rings.num_rings, opts.rings.fov_low, opts.rings.fov_high),
    };
    LidarScan::from_points(kept, rings, opts.rings.num_rings)
}

/// Parses a KITTI velodyne buffer: packed little-endian `f32` quadruples.
pub fn parse_kitti_bin(bytes: &[u8], opts: &IngestOptions) -> Result<LidarScan, ScanIoError> {
    if !bytes.len().is_multiple_of(KITTI_RECORD) {
        return Err(ScanIoError::Truncated(bytes.len(), KITTI_RECORD));
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    let points = bytes
        .chunks_exact(KITTI_RECORD)
        .map(|r| RawPoint::new(f(&r[0..4]), f(&r[4..8]), f(&r[8..12]), f(&r[12..16])))
        .collect();
    filter_and_build(points, None, opts)
}

pub fn read_kitti_bin(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<LidarScan, ScanIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_kitti_bin(&bytes, opts)
}

/// Writes points as a KITTI velodyne buffer (rings are not stored).
pub fn write_kitti_bin(path: impl AsRef<Path>, scan: &LidarScan) -> Result<(), ScanIoError> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(scan.len() * KITTI_RECORD);
    for p in scan.points() {
        for v in [p.x, p.y, p.z, p.intensity] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(io_err(path))
}

#[derive(Debug)]
struct PcdField {
    name: String,
    offset: usize,
}

/// Parses the ASCII subset of PCD v0.7.
///
/// `x`, `y` and `z` are required. A `ring` column, when present, is used as
/// is; otherwise rings come from [`assign_rings`].
pub fn parse_pcd_ascii(text: &str, opts: &IngestOptions) -> Result<LidarScan, ScanIoError> {
    let mut fields: Vec<String> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut declared_points: Option<usize> = None;
    let mut data_line = None;

    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default().to_ascii_uppercase();
        let rest: Vec<&str> = parts.collect();
        match key.as_str() {
            "VERSION" | "SIZE" | "TYPE" | "WIDTH" | "HEIGHT" | "VIEWPOINT" => {}
            "FIELDS" => fields = rest.iter().map(|s| s.to_ascii_lowercase()).collect(),
            "COUNT" => {
                counts = rest
                    .iter()
                    .map(|s| s.parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| ScanIoError::MalformedHeader(format!("COUNT: {e}")))?
            }
            "POINTS" => {
                let n = rest
                    .first()
                    .ok_or_else(|| ScanIoError::MalformedHeader("POINTS without a value".into()))?;
                declared_points = Some(n.parse().map_err(|e| ScanIoError::MalformedHeader(format!("POINTS: {e}")))?);
            }
            "DATA" => {
                match rest.first().map(|s| s.to_ascii_lowercase()) {
                    Some(kind) if kind == "ascii" => {}
                    other => {
                        return Err(ScanIoError::MalformedHeader(format!(
                            "unsupported DATA encoding {:?}",
                            other.unwrap_or_default()
                        )))
                    }
                }
                data_line = Some(no + 1);
                break;
            }
            other => return Err(ScanIoError::MalformedHeader(format!("unknown header key `{other}`"))),
        }
    }

    let data_start = data_line.ok_or_else(|| ScanIoError::MalformedHeader("missing DATA line".into()))?;
    if fields.is_empty() {
        return Err(ScanIoError::MalformedHeader("missing FIELDS line".into()));
    }
    if counts.is_empty() {
        counts = vec![1; fields.len()];
    }
    if counts.len() != fields.len() {
        return Err(ScanIoError::MalformedHeader("COUNT and FIELDS lengths differ".into()));
    }
    let mut layout = Vec::new();
    let mut offset = 0;
    for (name, &count) in fields.iter().zip(&counts) {
        layout.push(PcdField {
            name: name.clone(),
            offset,
        });
        offset += count;
    }
    let width = offset;
    let column = |name: &str| layout.iter().find(|f| f.name == name).map(|f| f.offset);
    let cx = column("x").ok_or(ScanIoError::MissingField("x"))?;
    let cy = column("y").ok_or(ScanIoError::MissingField("y"))?;
    let cz = column("z").ok_or(ScanIoError::MissingField("z"))?;
    let ci = column("intensity");
    let cr = column("ring");

    let mut points = Vec::with_capacity(declared_points.unwrap_or(0));
    let mut rings = Vec::new();
    for (no, raw) in text.lines().enumerate().skip(data_start) {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<&str> = line.split_whitespace().collect();
        if values.len() != width {
            return Err(ScanIoError::MalformedData {
                line: no + 1,
                reason: format!("expected {width} values, found {}", values.len()),
            });
        }
        let num = |c: usize| -> Result<f32, ScanIoError> {
            values[c].parse::<f32>().map_err(|e| ScanIoError::MalformedData {
                line: no + 1,
                reason: e.to_string(),
            })
        };
        let intensity = match ci {
            Some(c) => num(c)?,
            None => 0.0,
        };
        points.push(RawPoint::new(num(cx)?, num(cy)?, num(cz)?, intensity));
        if let Some(c) = cr {
            let r = num(c)?;
            if !(r >= 0.0 && r.fract() == 0.0 && (r as u32) < opts.rings.num_rings) {
                return Err(ScanIoError::MalformedData {
                    line: no + 1,
                    reason: format!("ring {r} outside [0, {})", opts.rings.num_rings),
                });
            }
            rings.push(r as u16);
        }
    }
    if let Some(n) = declared_points {
        if n != points.len() {
            return Err(ScanIoError::MalformedHeader(format!(
                "POINTS says {n} but {} data rows found",
                points.len()
            )));
        }
    }
    filter_and_build(points, cr.map(|_| rings), opts)
}

pub fn read_pcd_ascii(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<LidarScan, ScanIoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_pcd_ascii(&text, opts)
}

/// Writes a scan as ASCII PCD with `x y z intensity ring` columns.
pub fn write_pcd_ascii(path: impl AsRef<Path>, scan: &LidarScan) -> Result<(), ScanIoError> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("VERSION 0.7\nFIELDS x y z intensity ring\nSIZE 4 4 4 4 2\nTYPE F F F F U\nCOUNT 1 1 1 1 1\n");
    out.push_str(&format!("WIDTH {}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n", scan.len()));
    out.push_str(&format!("POINTS {}\nDATA ascii\n", scan.len()));
    for (p, r) in scan.points().iter().zip(scan.rings()) {
        out.push_str(&format!("{} {} {} {} {}\n", p.x, p.y, p.z, p.intensity, r));
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Serializes a scan in the internal `LK3DSCAN` layout.
pub fn encode_scan(scan: &LidarScan) -> Vec<u8> {
    let mut buf = Vec::with_capacity(20 + scan.len() * DUMP_RECORD);
    buf.extend_from_slice(SCAN_MAGIC);
    buf.extend_from_slice(&scan.num_rings.to_le_bytes());
    buf.extend_from_slice(&(scan.len() as u64).to_le_bytes());
    for (p, r) in scan.points().iter().zip(scan.rings()) {
        for v in [p.x, p.y, p.z, p.intensity] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&r.to_le_bytes());
    }
    buf
}

/// Inverse of [`encode_scan`]. Points and rings are taken verbatim.
pub fn decode_scan(bytes: &[u8]) -> Result<LidarScan, ScanIoError> {
    if bytes.len() < 20 || &bytes[0..8] != SCAN_MAGIC {
        return Err(ScanIoError::MalformedHeader("missing LK3DSCAN magic".into()));
    }
    let num_rings = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    if body.len() != count * DUMP_RECORD {
        return Err(ScanIoError::Truncated(body.len(), DUMP_RECORD));
    }
    if num_rings == 0 {
        return Err(ScanIoError::InvalidRingConfig("num_rings = 0".into()));
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    let mut points = Vec::with_capacity(count);
    let mut rings = Vec::with_capacity(count);
    for r in body.chunks_exact(DUMP_RECORD) {
        points.push(RawPoint::new(f(&r[0..4]), f(&r[4..8]), f(&r[8..12]), f(&r[12..16])));
        rings.push(u16::from_le_bytes([r[16], r[17]]));
    }
    LidarScan::from_points(points, rings, num_rings)
}

pub fn write_scan_dump(path: impl AsRef<Path>, scan: &LidarScan) -> Result<(), ScanIoError> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&encode_scan(scan)).map_err(io_err(path))
}

pub fn read_scan_dump(path: impl AsRef<Path>) -> Result<LidarScan, ScanIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_scan(&bytes)
}

/// Supported on-disk scan formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanFormat {
    KittiBin,
    Pcd,
    Lk3dScan,
}

impl ScanFormat {
    /// Guesses from the file extension, falling back to the `LK3DSCAN` magic.
    pub fn detect(path: &Path) -> Option<ScanFormat> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
            Some(e) if e == "bin" => Some(ScanFormat::KittiBin),
            Some(e) if e == "pcd" => Some(ScanFormat::Pcd),
            Some(e) if e == "lk3dscan" || e == "scan" => Some(ScanFormat::Lk3dScan),
            _ => {
                let head = fs::read(path).ok()?;
                (head.len() >= 8 && &head[0..8] == SCAN_MAGIC).then_some(ScanFormat::Lk3dScan)
            }
        }
    }
}

impl std::str::FromStr for ScanFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kitti-bin" => Ok(ScanFormat::KittiBin),
            "pcd" => Ok(ScanFormat::Pcd),
            "lk3dscan" => Ok(ScanFormat::Lk3dScan),
            other => Err(format!("unknown input format `{other}`")),
        }
    }
}

pub fn read_scan(path: impl AsRef<Path>, format: ScanFormat, opts: &IngestOptions) -> Result<LidarScan, ScanIoError> {
    match format {
        ScanFormat::KittiBin => read_kitti_bin(path, opts),
        ScanFormat::Pcd => read_pcd_ascii(path, opts),
        ScanFormat::Lk3dScan => read_scan_dump(path),
    }
}
