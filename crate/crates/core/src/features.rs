//! Per-pixel feature volumes for the left and right images.
//!
//! Features either come from the built-in census/patch descriptor or are
//! loaded from B2FT files exported by an external extractor. Matching in the
//! cyclopean grid needs samples at half-pixel positions, produced by
//! [`double_width`].

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::GrayImage;

/// Variance floor applied before patch standardization.
const PATCH_VARIANCE_FLOOR: f64 = 1e-8;
const NORM_TOLERANCE: f32 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVolume {
    height: usize,
    width_samples: usize,
    channels: usize,
    doubled: bool,
    normalized: bool,
    data: Vec<f32>,
}

impl FeatureVolume {
    pub fn new(
        height: usize,
        width_samples: usize,
        channels: usize,
        doubled: bool,
        normalized: bool,
        data: Vec<f32>,
    ) -> Result<Self> {
        if height == 0 || width_samples == 0 || channels == 0 {
            return Err(Error::Domain("feature volume with an empty dimension".into()));
        }
        if data.len() != height * width_samples * channels {
            return Err(Error::DimensionMismatch(format!(
                "feature volume {height}x{width_samples}x{channels} needs {} values, got {}",
                height * width_samples * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("feature volume contains non-finite values".into()));
        }
        let fv = Self {
            height,
            width_samples,
            channels,
            doubled,
            normalized,
            data,
        };
        if normalized {
            for y in 0..height {
                for x in 0..width_samples {
                    let n = norm(fv.sample(y, x));
                    if n != 0.0 && (n - 1.0).abs() > NORM_TOLERANCE {
                        return Err(Error::Domain(format!(
                            "sample ({y}, {x}) has norm {n} but the volume is flagged normalized"
                        )));
                    }
                }
            }
        }
        Ok(fv)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width_samples(&self) -> usize {
        self.width_samples
    }

    /// Image width in pixels, regardless of doubling.
    pub fn pixel_width(&self) -> usize {
        if self.doubled {
            self.width_samples / 2
        } else {
            self.width_samples
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn doubled(&self) -> bool {
        self.doubled
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn sample(&self, y: usize, x: usize) -> &[f32] {
        let start = (y * self.width_samples + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Feature at half-pixel index `j` (position `j / 2`) of a native-width
    /// volume, interpolated on the fly exactly as [`double_width`] would.
    pub fn half_sample(&self, y: usize, j: usize, out: &mut Vec<f32>) {
        debug_assert!(!self.doubled);
        out.clear();
        let i = j / 2;
        if j % 2 == 0 || i + 1 >= self.width_samples {
            out.extend_from_slice(self.sample(y, i.min(self.width_samples - 1)));
            return;
        }
        let a = self.sample(y, i);
        let b = self.sample(y, i + 1);
        out.extend(a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)));
        if self.normalized {
            normalize_in_place(out);
        }
    }

    pub fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        if self.height != height || self.pixel_width() != width {
            return Err(Error::DimensionMismatch(format!(
                "feature volume is {}x{} but the stereo pair is {}x{}",
                self.height,
                self.pixel_width(),
                height,
                width
            )));
        }
        Ok(())
    }
}

fn norm(v: &[f32]) -> f32 {
    v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt() as f32
}

fn normalize_in_place(v: &mut [f32]) {
    let n = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if n < 1e-12 {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        v.iter_mut().for_each(|x| *x = (*x as f64 / n) as f32);
    }
}

/// Census comparisons plus a standardized intensity patch, L2-normalized.
///
/// Channel layout per pixel: `(2r+1)² - 1` census signs in raster order of
/// the window (center skipped), then the `(2r+1)²` standardized intensities.
pub fn census_patch_features(image: &GrayImage, window_radius: usize) -> Result<FeatureVolume> {
    if image.is_empty() {
        return Err(Error::Domain("empty image".into()));
    }
    if window_radius == 0 {
        return Err(Error::Domain("census window radius must be at least 1".into()));
    }
    let side = 2 * window_radius + 1;
    if image.width() < side || image.height() < side {
        return Err(Error::Domain(format!(
            "image {}x{} smaller than the {side}x{side} window",
            image.width(),
            image.height()
        )));
    }
    let (w, h) = (image.width() as isize, image.height() as isize);
    let r = window_radius as isize;
    let taps = side * side;
    let channels = 2 * taps - 1;
    let mut data = Vec::with_capacity(image.len() * channels);
    let mut patch = vec![0f64; taps];
    let mut feat = vec![0f32; channels];
    for y in 0..h {
        for x in 0..w {
            let center = *image.get(x as usize, y as usize);
            let mut k = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w - 1) as usize;
                    let sy = (y + dy).clamp(0, h - 1) as usize;
                    patch[k] = *image.get(sx, sy) as f64;
                    k += 1;
                }
            }
            let mid = taps / 2;
            let mut c = 0;
            for (k, v) in patch.iter().enumerate() {
                if k == mid {
                    continue;
                }
                feat[c] = match (*v).partial_cmp(&(center as f64)) {
                    Some(std::cmp::Ordering::Greater) => 1.0,
                    Some(std::cmp::Ordering::Less) => -1.0,
                    _ => 0.0,
                };
                c += 1;
            }
            let mean = patch.iter().sum::<f64>() / taps as f64;
            let var = patch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / taps as f64;
            let inv_sd = 1.0 / var.max(PATCH_VARIANCE_FLOOR).sqrt();
            for (i, v) in patch.iter().enumerate() {
                feat[taps - 1 + i] = ((v - mean) * inv_sd) as f32;
            }
            normalize_in_place(&mut feat);
            data.extend_from_slice(&feat);
        }
    }
    FeatureVolume::new(
        image.height(),
        image.width(),
        channels,
        false,
        true,
        data,
    )
}

/// Resamples a volume onto the half-pixel grid: even samples copy the input,
/// odd samples average their two neighbours (the last one replicates).
pub fn double_width(fv: &FeatureVolume) -> Result<FeatureVolume> {
    if fv.doubled {
        return Err(Error::Usage("feature volume is already doubled".into()));
    }
    let n = fv.width_samples;
    let c = fv.channels;
    let mut data = Vec::with_capacity(fv.data.len() * 2);
    let mut buf = Vec::with_capacity(c);
    for y in 0..fv.height {
        for j in 0..2 * n {
            fv.half_sample(y, j, &mut buf);
            data.extend_from_slice(&buf);
        }
    }
    Ok(FeatureVolume {
        height: fv.height,
        width_samples: 2 * n,
        channels: c,
        doubled: true,
        normalized: fv.normalized,
        data,
    })
}

const B2FT_MAGIC: &[u8; 4] = b"B2FT";
const B2FT_VERSION: u32 = 1;
const B2FT_HEADER_LEN: usize = 28;

pub fn store_feature_volume(fv: &FeatureVolume, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(B2FT_HEADER_LEN + fv.data.len() * 4);
    buf.extend_from_slice(B2FT_MAGIC);
    buf.extend_from_slice(&B2FT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(fv.height as u32).to_le_bytes());
    buf.extend_from_slice(&(fv.width_samples as u32).to_le_bytes());
    buf.extend_from_slice(&(fv.channels as u32).to_le_bytes());
    buf.push(fv.doubled as u8);
    buf.push(fv.normalized as u8);
    buf.extend_from_slice(&[0u8; 6]);
    for v in &fv.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_feature_volume(path: &Path) -> Result<FeatureVolume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != B2FT_MAGIC {
        return Err(Error::parse(path, "not a B2FT file"));
    }
    if bytes.len() < B2FT_HEADER_LEN {
        return Err(Error::Truncated {
            path: path.into(),
            expected: B2FT_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != B2FT_VERSION {
        return Err(Error::parse(path, format!("unsupported B2FT version {version}")));
    }
    let height = u32_at(8) as usize;
    let width_samples = u32_at(12) as usize;
    let channels = u32_at(16) as usize;
    let flag = |o: usize| match bytes[o] {
        0 => Ok(false),
        1 => Ok(true),
        b => Err(Error::parse(path, format!("invalid flag byte {b} at offset {o}"))),
    };
    let doubled = flag(20)?;
    let normalized = flag(21)?;
    let count = height
        .checked_mul(width_samples)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::parse(path, "header dimensions overflow"))?;
    let expected = B2FT_HEADER_LEN + count * 4;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::parse(
            path,
            format!("{} trailing bytes after payload", bytes.len() - expected),
        ));
    }
    let data = bytes[B2FT_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureVolume::new(height, width_samples, channels, doubled, normalized, data)
        .map_err(|e| Error::parse(path, e.to_string()))
}
