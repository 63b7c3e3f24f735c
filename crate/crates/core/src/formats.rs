//! On-disk formats: dataset and field files (text header + little-endian
//! `f64` payload), cross-section CSV and mask summaries.
//!
//! Numbers in headers use Rust's shortest round-trip formatting, so reading a
//! file back restores every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::{FrequencyGrid, MeasurementKind, MeasurementSet, MultiFreqDataset, ZeroMode};
use crate::geometry::{Aabb, Point};
use crate::imaging::{CrossSection, IndicatorField, SamplingGrid, VoxelMask};

pub const DATASET_MAGIC: &str = "MSMDATA 1";
pub const FIELD_MAGIC: &str = "MSMFIELD 1";
pub const MASK_MAGIC: &str = "MSMMASK 1";
const END_HEADER: &str = "end_header";

fn vec3(p: &Point) -> String {
    format!("{} {} {}", p[0], p[1], p[2])
}

/// Dataset file bytes. Header lines, in order:
/// magic, `scenario_hash`, `kind`, `sensors` (L), `J`, `dk`, `k_max`,
/// `columns` (2J+1), `noise_level`, `seed`, `zero_mode`, one `sensor <i>: x y z`
/// per sensor, `end_header`; then `L × (2J+1)` complex values as `(re, im)`
/// little-endian `f64` pairs, row-major over (sensor, m = -J..=J).
pub fn encode_dataset(data: &MultiFreqDataset, scenario_hash: &str) -> Vec<u8> {
    let mut h = String::new();
    let _ = writeln!(h, "{DATASET_MAGIC}");
    let _ = writeln!(h, "scenario_hash: {scenario_hash}");
    let _ = writeln!(h, "kind: {}", data.kind.as_str());
    let _ = writeln!(h, "sensors: {}", data.sensor_count());
    let _ = writeln!(h, "J: {}", data.grid.count());
    let _ = writeln!(h, "dk: {}", data.grid.spacing());
    let _ = writeln!(h, "k_max: {}", data.grid.k_max());
    let _ = writeln!(h, "columns: {}", data.grid.difference_count());
    let _ = writeln!(h, "noise_level: {}", data.noise_level);
    let _ = writeln!(h, "seed: {}", data.seed);
    let _ = writeln!(h, "zero_mode: {}", data.zero_mode.as_str());
    for (i, p) in data.sensors.points().iter().enumerate() {
        let _ = writeln!(h, "sensor {i}: {}", vec3(p));
    }
    let _ = writeln!(h, "{END_HEADER}");
    let mut out = h.into_bytes();
    out.reserve(data.values().len() * 16);
    for v in data.values() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

struct Header<'a> {
    path: &'a Path,
    lines: Vec<(String, String)>,
    pos: usize,
}

impl<'a> Header<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format { path: self.path.to_path_buf(), message: msg.into() }
    }

    fn next(&mut self, key: &str) -> Result<String> {
        match self.lines.get(self.pos) {
            Some((k, v)) if k == key => {
                self.pos += 1;
                Ok(v.clone())
            }
            Some((k, _)) => Err(self.err(format!("expected header key `{key}`, found `{k}`"))),
            None => Err(self.err(format!("header ends before `{key}`"))),
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.next(key)?;
        v.parse().map_err(|_| self.err(format!("bad value for `{key}`: {v:?}")))
    }

    fn triple<T: std::str::FromStr + Copy>(&mut self, key: &str) -> Result<[T; 3]> {
        let v = self.next(key)?;
        let parts: Vec<T> = v.split_whitespace().filter_map(|s| s.parse().ok()).collect();
        if parts.len() != 3 || v.split_whitespace().count() != 3 {
            return Err(self.err(format!("`{key}` needs three numbers, got {v:?}")));
        }
        Ok([parts[0], parts[1], parts[2]])
    }

    fn finish(&self) -> Result<()> {
        match self.lines.get(self.pos) {
            None => Ok(()),
            Some((k, _)) => Err(self.err(format!("unexpected header key `{k}`"))),
        }
    }
}

/// Splits `bytes` into header lines after `magic` and the binary payload.
fn split_header<'a>(path: &'a Path, bytes: &'a [u8], magic: &str) -> Result<(Header<'a>, &'a [u8])> {
    let err = |m: &str| Error::Format { path: path.to_path_buf(), message: m.to_string() };
    if bytes.is_empty() {
        return Err(err("empty file"));
    }
    let marker = format!("\n{END_HEADER}\n");
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker.as_bytes())
        .ok_or_else(|| err("missing end_header line"))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| err("header is not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next() != Some(magic) {
        return Err(err(&format!("not a `{magic}` file")));
    }
    let mut parsed = Vec::new();
    for line in lines {
        let (k, v) = line.split_once(": ").ok_or_else(|| err(&format!("malformed header line {line:?}")))?;
        parsed.push((k.to_string(), v.to_string()));
    }
    Ok((Header { path, lines: parsed, pos: 0 }, &bytes[end + marker.len()..]))
}

fn read_f64s(path: &Path, payload: &[u8], count: usize) -> Result<Vec<f64>> {
    if payload.len() != count * 8 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("payload has {} bytes, expected {}", payload.len(), count * 8),
        });
    }
    Ok(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

/// Parses a dataset file; returns the dataset and its scenario hash.
pub fn decode_dataset(path: &Path, bytes: &[u8]) -> Result<(MultiFreqDataset, String)> {
    let (mut h, payload) = split_header(path, bytes, DATASET_MAGIC)?;
    let hash = h.next("scenario_hash")?;
    let kind_s = h.next("kind")?;
    let kind = MeasurementKind::parse(&kind_s).ok_or_else(|| h.err(format!("unknown kind {kind_s:?}")))?;
    let l: usize = h.parse("sensors")?;
    let j: usize = h.parse("J")?;
    let dk: f64 = h.parse("dk")?;
    let k_max: f64 = h.parse("k_max")?;
    let columns: usize = h.parse("columns")?;
    let noise_level: f64 = h.parse("noise_level")?;
    let seed: u64 = h.parse("seed")?;
    let zm = h.next("zero_mode")?;
    let zero_mode = ZeroMode::parse(&zm).ok_or_else(|| h.err(format!("unknown zero_mode {zm:?}")))?;
    let mut points = Vec::with_capacity(l);
    for i in 0..l {
        let p: [f64; 3] = h.triple(&format!("sensor {i}"))?;
        points.push(Point::new(p[0], p[1], p[2]));
    }
    h.finish()?;
    let grid = FrequencyGrid::new(k_max, j).map_err(|e| h.err(e.to_string()))?;
    if grid.spacing() != dk || columns != grid.difference_count() {
        return Err(h.err(format!("dk = {dk} / columns = {columns} inconsistent with k_max = {k_max}, J = {j}")));
    }
    let sensors = match kind {
        MeasurementKind::Near => MeasurementSet::near(points),
        MeasurementKind::Far => MeasurementSet::far(points),
    }
    .map_err(|e| h.err(e.to_string()))?;
    if sensors.len() != l {
        return Err(h.err("far directions are not closed under negation"));
    }
    let raw = read_f64s(path, payload, 2 * l * columns)?;
    let values = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    let data = MultiFreqDataset::from_values(sensors, grid, values, zero_mode, noise_level, seed)
        .map_err(|e| h.err(e.to_string()))?;
    Ok((data, hash))
}

pub fn write_dataset(path: &Path, data: &MultiFreqDataset, scenario_hash: &str) -> Result<()> {
    std::fs::write(path, encode_dataset(data, scenario_hash)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<(MultiFreqDataset, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(path, &bytes)
}

/// Field file bytes. Header: magic, `scenario_hash`, `min`, `max`,
/// `resolution`, `normalized`, `end_header`; then one little-endian `f64`
/// per voxel, linear index with x1 slowest and x3 fastest.
pub fn encode_field(field: &IndicatorField, scenario_hash: &str) -> Vec<u8> {
    let g = &field.grid;
    let mut h = String::new();
    let _ = writeln!(h, "{FIELD_MAGIC}");
    let _ = writeln!(h, "scenario_hash: {scenario_hash}");
    let _ = writeln!(h, "min: {}", vec3(&g.bounds.min));
    let _ = writeln!(h, "max: {}", vec3(&g.bounds.max));
    let _ = writeln!(h, "resolution: {} {} {}", g.resolution[0], g.resolution[1], g.resolution[2]);
    let _ = writeln!(h, "normalized: {}", field.normalized);
    let _ = writeln!(h, "{END_HEADER}");
    let mut out = h.into_bytes();
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(path: &Path, bytes: &[u8]) -> Result<(IndicatorField, String)> {
    let (mut h, payload) = split_header(path, bytes, FIELD_MAGIC)?;
    let hash = h.next("scenario_hash")?;
    let min: [f64; 3] = h.triple("min")?;
    let max: [f64; 3] = h.triple("max")?;
    let resolution: [usize; 3] = h.triple("resolution")?;
    let normalized: bool = h.parse("normalized")?;
    h.finish()?;
    let bounds = Aabb::new(Point::new(min[0], min[1], min[2]), Point::new(max[0], max[1], max[2]));
    let grid = SamplingGrid::new(bounds, resolution).map_err(|e| h.err(e.to_string()))?;
    let values = read_f64s(path, payload, grid.len())?;
    Ok((IndicatorField { grid, values, normalized }, hash))
}

pub fn write_field(path: &Path, field: &IndicatorField, scenario_hash: &str) -> Result<()> {
    std::fs::write(path, encode_field(field, scenario_hash)).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: &Path) -> Result<(IndicatorField, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(path, &bytes)
}

/// CSV with `#` comment header and columns named after the in-plane axes.
pub fn encode_slice_csv(slice: &CrossSection, scenario_hash: &str) -> String {
    let (a, b) = slice.plane_axes();
    let mut s = String::new();
    let _ = writeln!(s, "# msm cross-section");
    let _ = writeln!(s, "# scenario_hash: {scenario_hash}");
    let _ = writeln!(s, "# normal_axis: x{}", slice.axis);
    let _ = writeln!(s, "# coordinate: {}", slice.coordinate);
    let _ = writeln!(s, "x{a},x{b},value");
    for (iu, u) in slice.u_coords.iter().enumerate() {
        for (iv, v) in slice.v_coords.iter().enumerate() {
            let _ = writeln!(s, "{u},{v},{}", slice.value(iu, iv));
        }
    }
    s
}

/// Mask summary followed by the run-length encoding of the set voxels as
/// `start length` pairs over the field's linear index.
pub fn encode_mask(mask: &VoxelMask, scenario_hash: &str) -> String {
    let g = &mask.grid;
    let mut s = String::new();
    let _ = writeln!(s, "{MASK_MAGIC}");
    let _ = writeln!(s, "scenario_hash: {scenario_hash}");
    let _ = writeln!(s, "iso: {}", mask.iso);
    let _ = writeln!(s, "min: {}", vec3(&g.bounds.min));
    let _ = writeln!(s, "max: {}", vec3(&g.bounds.max));
    let _ = writeln!(s, "resolution: {} {} {}", g.resolution[0], g.resolution[1], g.resolution[2]);
    let _ = writeln!(s, "count: {}", mask.count());
    match (mask.centroid(), mask.bounding_box()) {
        (Some(c), Some(b)) => {
            let _ = writeln!(s, "centroid: {}", vec3(&c));
            let _ = writeln!(s, "bbox_min: {}", vec3(&b.min));
            let _ = writeln!(s, "bbox_max: {}", vec3(&b.max));
        }
        _ => {
            let _ = writeln!(s, "centroid: none");
            let _ = writeln!(s, "bbox_min: none");
            let _ = writeln!(s, "bbox_max: none");
        }
    }
    let comps = mask.components();
    let _ = writeln!(s, "components: {}", comps.len());
    for (i, c) in comps.iter().enumerate() {
        let _ = writeln!(s, "component {i}: {} {}", c.voxels.len(), vec3(&c.centroid));
    }
    let runs = mask.runs();
    let _ = writeln!(s, "runs: {}", runs.len());
    for (start, len) in runs {
        let _ = writeln!(s, "{start} {len}");
    }
    s
}

/// Rebuilds the voxel set from [`encode_mask`] output.
pub fn decode_mask(path: &Path, text: &str) -> Result<VoxelMask> {
    let err = |m: String| Error::Format { path: path.to_path_buf(), message: m };
    let mut lines = text.lines();
    if lines.next() != Some(MASK_MAGIC) {
        return Err(err(format!("not a `{MASK_MAGIC}` file")));
    }
    let mut fields = std::collections::HashMap::new();
    let mut runs = Vec::new();
    let mut in_runs = false;
    for line in lines {
        if in_runs {
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => runs.push((a, b)),
                _ => return Err(err(format!("malformed run {line:?}"))),
            }
            continue;
        }
        let (k, v) = line.split_once(": ").ok_or_else(|| err(format!("malformed line {line:?}")))?;
        in_runs = k == "runs";
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| err(format!("missing `{k}`")));
    let nums = |k: &str| -> Result<Vec<f64>> {
        get(k)?.split_whitespace().map(|s| s.parse().map_err(|_| err(format!("bad `{k}`")))).collect()
    };
    let iso: f64 = get("iso")?.parse().map_err(|_| err("bad `iso`".into()))?;
    let (min, max, res) = (nums("min")?, nums("max")?, nums("resolution")?);
    if min.len() != 3 || max.len() != 3 || res.len() != 3 {
        return Err(err("bounds and resolution need three numbers".into()));
    }
    let bounds = Aabb::new(Point::new(min[0], min[1], min[2]), Point::new(max[0], max[1], max[2]));
    let grid = SamplingGrid::new(bounds, [res[0] as usize, res[1] as usize, res[2] as usize])
        .map_err(|e| err(e.to_string()))?;
    let mut cells = vec![false; grid.len()];
    for (start, len) in runs {
        let cell = cells.get_mut(start..start + len).ok_or_else(|| err(format!("run {start}+{len} out of range")))?;
        cell.fill(true);
    }
    Ok(VoxelMask { grid, iso, cells })
}
