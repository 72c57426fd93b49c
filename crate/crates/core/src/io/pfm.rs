//! Single-channel PFM rasters. Rows are stored bottom-up; the sign of the
//! scale field selects byte order (negative means little-endian). `+inf`
//! marks an invalid cell.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};

/// A PFM image split into values and a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct PfmImage {
    pub values: Raster<f32>,
    pub valid: Mask,
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize, path: &Path) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(path, "bad PFM header: unexpected end"));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::parse(path, "bad PFM header: not ASCII"))
}

pub fn read_pfm(path: &Path) -> Result<PfmImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0;
    match header_token(&bytes, &mut pos, path)? {
        "Pf" => {}
        "PF" => return Err(Error::parse(path, "color PFM unsupported")),
        other => return Err(Error::parse(path, format!("bad PFM header: magic {other:?}"))),
    }
    let mut number = |what: &str| -> Result<String> {
        header_token(&bytes, &mut pos, path)
            .map(str::to_owned)
            .map_err(|_| Error::parse(path, format!("bad PFM header: missing {what}")))
    };
    let width: usize = number("width")?
        .parse()
        .map_err(|_| Error::parse(path, "bad PFM header: width"))?;
    let height: usize = number("height")?
        .parse()
        .map_err(|_| Error::parse(path, "bad PFM header: height"))?;
    let scale: f64 = number("scale")?
        .parse()
        .map_err(|_| Error::parse(path, "bad PFM header: scale"))?;
    if width == 0 || height == 0 || scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(path, "bad PFM header: zero size or scale"));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::parse(path, "bad PFM header: no payload separator"));
    }
    pos += 1;
    let payload = &bytes[pos..];
    let expected = width * height * 4;
    if payload.len() < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::parse(
            path,
            format!("{} trailing bytes after payload", payload.len() - expected),
        ));
    }
    let little = scale < 0.0;
    let mut values = Vec::with_capacity(width * height);
    let mut valid = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = height - 1 - y;
        for x in 0..width {
            let i = (row * width + x) * 4;
            let raw = [payload[i], payload[i + 1], payload[i + 2], payload[i + 3]];
            let v = if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            if v.is_nan() {
                return Err(Error::parse(path, format!("NaN payload at ({x}, {y})")));
            }
            valid.push(v != f32::INFINITY);
            values.push(v);
        }
    }
    Ok(PfmImage {
        values: Raster::from_vec(width, height, values)?,
        valid: Raster::from_vec(width, height, valid)?,
    })
}

/// Writes little-endian PFM; invalid cells are written as `+inf`.
pub fn write_pfm(values: &Raster<f32>, valid: Option<&Mask>, path: &Path) -> Result<()> {
    if let Some(m) = valid {
        if !m.same_dims(values) {
            return Err(Error::DimensionMismatch("PFM values and mask differ in size".into()));
        }
    }
    let (w, h) = (values.width(), values.height());
    let mut out = format!("Pf\n{w} {h}\n-1\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            let ok = valid.map_or(true, |m| *m.get(x, y));
            let v = if ok { *values.get(x, y) } else { f32::INFINITY };
            if v.is_nan() {
                return Err(Error::Domain(format!("NaN at ({x}, {y}) cannot be written to PFM")));
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
