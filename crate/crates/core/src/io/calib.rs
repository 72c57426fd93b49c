//! Middlebury-style `calib.txt`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::EpipolarGeometry;

fn parse_number(path: &Path, key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(path, format!("{key}: not a number: {v:?}")))
}

pub fn parse_calib(text: &str, path: &Path) -> Result<EpipolarGeometry> {
    let mut kv = HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, format!("expected key=value, got {line:?}")))?;
        kv.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    let required = |key: &str| kv.get(key).ok_or_else(|| Error::parse(path, format!("{key} missing")));

    let cam0 = required("cam0")?;
    let inner = cam0.trim().trim_start_matches('[').trim_end_matches(']');
    let first = inner
        .split(|c: char| c == ';' || c.is_whitespace())
        .find(|s| !s.is_empty())
        .ok_or_else(|| Error::parse(path, "cam0: empty matrix"))?;
    let focal = parse_number(path, "cam0", first)?;
    let baseline = parse_number(path, "baseline", required("baseline")?)?;
    let width = parse_number(path, "width", required("width")?)?;
    let height = parse_number(path, "height", required("height")?)?;
    let doffs = match kv.get("doffs") {
        Some(v) => parse_number(path, "doffs", v)?,
        None => 0.0,
    };
    let as_count = |key: &str, v: f64| -> Result<usize> {
        if v.fract() != 0.0 || v < 1.0 {
            return Err(Error::parse(path, format!("{key}: expected a positive integer, got {v}")));
        }
        Ok(v as usize)
    };
    let width = as_count("width", width)?;
    let height = as_count("height", height)?;
    let ndisp = match kv.get("ndisp") {
        Some(v) => as_count("ndisp", parse_number(path, "ndisp", v)?)?,
        None => (width / 4).max(1),
    };
    EpipolarGeometry::new(focal, baseline, width, height, ndisp.div_ceil(2) as u32, doffs)
        .map_err(|e| Error::parse(path, e.to_string()))
}

pub fn read_calib(path: &Path) -> Result<EpipolarGeometry> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calib(&text, path)
}

pub fn write_calib(geom: &EpipolarGeometry, path: &Path) -> Result<()> {
    let f = geom.focal_length_px;
    let (cx, cy) = (geom.width as f64 / 2.0, geom.height as f64 / 2.0);
    let mut s = String::new();
    let _ = writeln!(s, "cam0=[{f} 0 {cx}; 0 {f} {cy}; 0 0 1]");
    let _ = writeln!(s, "cam1=[{f} 0 {cx}; 0 {f} {cy}; 0 0 1]");
    let _ = writeln!(s, "doffs={}", geom.disparity_offset);
    let _ = writeln!(s, "baseline={}", geom.baseline);
    let _ = writeln!(s, "width={}", geom.width);
    let _ = writeln!(s, "height={}", geom.height);
    let _ = writeln!(s, "ndisp={}", 2 * geom.max_disparity_c);
    fs::write(path, s).map_err(|e| Error::io(path, e))
}
