//! Disparity error metrics over jointly valid pixels.

mod ssim;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fill::{DisparityMap, MapSource};
use crate::numeric::{sum, CompensatedSum};
use crate::raster::{Mask, Raster};

pub use ssim::{ssim_mean, SSIM_RADIUS, SSIM_SIGMA};

pub const DEFAULT_TAU: f64 = 2.0;
pub const MI_BINS: usize = 64;

/// Peak signal-to-noise ratio, which has no finite value for a perfect
/// estimate and no value at all when the reference is flat.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
    Undefined,
}

impl Psnr {
    pub fn value(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => Some(f64::INFINITY),
            Psnr::Undefined => None,
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.4}"),
            Psnr::Infinite => f.write_str("infinite"),
            Psnr::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Psnr::Finite(v) => s.serialize_f64(*v),
            Psnr::Infinite => s.serialize_str("infinite"),
            Psnr::Undefined => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Null => Ok(Psnr::Undefined),
            serde_json::Value::String(s) if s == "infinite" => Ok(Psnr::Infinite),
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(Psnr::Finite)
                .ok_or_else(|| serde::de::Error::custom("bad psnr")),
            other => Err(serde::de::Error::custom(format!("bad psnr value {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub avg_error: f64,
    pub bad_error: f64,
    pub tau: f64,
    pub rms_error: f64,
    /// `None` when the reference has zero range.
    pub ssim_error: Option<f64>,
    pub psnr_sim: Psnr,
    pub mutual_info_sim: f64,
    pub evaluated_pixels: usize,
}

impl MetricReport {
    pub fn table(&self) -> String {
        let rows = [
            ("avg_error", format!("{:.6}", self.avg_error)),
            ("bad_error", format!("{:.6} (tau {})", self.bad_error, self.tau)),
            ("rms_error", format!("{:.6}", self.rms_error)),
            (
                "ssim_error",
                self.ssim_error.map_or("undefined".into(), |v| format!("{v:.6}")),
            ),
            ("psnr_sim", self.psnr_sim.to_string()),
            ("mutual_info_sim", format!("{:.6}", self.mutual_info_sim)),
            ("evaluated_pixels", self.evaluated_pixels.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<18}{v:>24}");
        }
        out
    }
}

fn check_pair(est: &DisparityMap, gt: &DisparityMap) -> Result<()> {
    if !est.same_dims(gt) {
        return Err(Error::DimensionMismatch(format!(
            "estimate {}x{} vs ground truth {}x{}",
            est.width(),
            est.height(),
            gt.width(),
            gt.height()
        )));
    }
    Ok(())
}

pub(crate) fn joint_mask(est: &DisparityMap, gt: &DisparityMap) -> Mask {
    Raster::from_fn(est.width(), est.height(), |x, y| *est.valid().get(x, y) && *gt.valid().get(x, y))
}

fn joint_pairs(est: &DisparityMap, gt: &DisparityMap) -> Result<Vec<(f64, f64)>> {
    check_pair(est, gt)?;
    let pairs: Vec<(f64, f64)> = (0..est.height())
        .flat_map(|y| (0..est.width()).map(move |x| (x, y)))
        .filter_map(|(x, y)| Some((est.get(x, y)? as f64, gt.get(x, y)? as f64)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Insufficient("no pixel is valid in both maps".into()));
    }
    Ok(pairs)
}

fn mutual_information(pairs: &[(f64, f64)]) -> f64 {
    let (lo, hi) = pairs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| (lo.min(a.min(*b)), hi.max(a.max(*b))));
    let bin = |v: f64| {
        if hi > lo {
            (((v - lo) / (hi - lo) * MI_BINS as f64) as usize).min(MI_BINS - 1)
        } else {
            0
        }
    };
    let mut joint = vec![0usize; MI_BINS * MI_BINS];
    let mut pe = vec![0usize; MI_BINS];
    let mut pg = vec![0usize; MI_BINS];
    for &(e, g) in pairs {
        let (i, j) = (bin(e), bin(g));
        joint[i * MI_BINS + j] += 1;
        pe[i] += 1;
        pg[j] += 1;
    }
    let n = pairs.len() as f64;
    sum(joint.iter().enumerate().filter(|(_, c)| **c > 0).map(|(k, &c)| {
        let pxy = c as f64 / n;
        let px = pe[k / MI_BINS] as f64 / n;
        let py = pg[k % MI_BINS] as f64 / n;
        pxy * (pxy / (px * py)).ln()
    }))
}

pub fn evaluate(est: &DisparityMap, gt: &DisparityMap, tau: f64) -> Result<MetricReport> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::Domain(format!("tau must be finite and >= 0, got {tau}")));
    }
    let pairs = joint_pairs(est, gt)?;
    let n = pairs.len() as f64;
    let mut abs = CompensatedSum::new();
    let mut sq = CompensatedSum::new();
    let mut bad = 0usize;
    for &(e, g) in &pairs {
        let diff = e - g;
        abs.add(diff.abs());
        sq.add(diff * diff);
        if diff.abs() > tau {
            bad += 1;
        }
    }
    let mse = sq.value() / n;
    let (gmin, gmax) = pairs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let range = gmax - gmin;
    let psnr_sim = if range <= 0.0 {
        Psnr::Undefined
    } else if mse == 0.0 {
        Psnr::Infinite
    } else {
        Psnr::Finite(10.0 * (range * range / mse).log10())
    };
    let ssim_error = (range > 0.0).then(|| (1.0 - ssim_mean(est, gt, range)).clamp(0.0, 1.0));
    Ok(MetricReport {
        avg_error: abs.value() / n,
        bad_error: bad as f64 / n,
        tau,
        rms_error: mse.sqrt(),
        ssim_error,
        psnr_sim,
        mutual_info_sim: mutual_information(&pairs),
        evaluated_pixels: pairs.len(),
    })
}

/// `est − gt` on jointly valid cells.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedError {
    pub values: Raster<f32>,
    pub valid: Mask,
    pub mean_abs: f64,
}

pub fn signed_error_map(est: &DisparityMap, gt: &DisparityMap) -> Result<SignedError> {
    let pairs = joint_pairs(est, gt)?;
    let valid = joint_mask(est, gt);
    let values = Raster::from_fn(est.width(), est.height(), |x, y| {
        if *valid.get(x, y) {
            (*est.values().get(x, y) as f64 - *gt.values().get(x, y) as f64) as f32
        } else {
            0.0
        }
    });
    let mean_abs = sum(pairs.iter().map(|(e, g)| (e - g).abs())) / pairs.len() as f64;
    Ok(SignedError { values, valid, mean_abs })
}

impl SignedError {
    /// Diverging colour rendering: negative red, positive blue, invalid and
    /// zero white. Colours saturate at `limit` (default: largest magnitude).
    pub fn to_rgb(&self, limit: Option<f64>) -> image::RgbImage {
        let peak = limit.unwrap_or_else(|| {
            self.values
                .as_slice()
                .iter()
                .zip(self.valid.as_slice())
                .filter(|(_, ok)| **ok)
                .fold(0.0f64, |m, (v, _)| m.max((*v as f64).abs()))
        });
        image::RgbImage::from_fn(self.values.width() as u32, self.values.height() as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            if !*self.valid.get(x, y) || peak <= 0.0 {
                return image::Rgb([255, 255, 255]);
            }
            let v = *self.values.get(x, y) as f64;
            let fade = (255.0 * (1.0 - (v.abs() / peak).min(1.0))).round() as u8;
            if v < 0.0 {
                image::Rgb([255, fade, fade])
            } else {
                image::Rgb([fade, fade, 255])
            }
        })
    }

    pub fn write_png(&self, path: &Path, limit: Option<f64>) -> Result<()> {
        self.to_rgb(limit).save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

fn valid_range(m: &DisparityMap) -> Option<(f64, f64)> {
    m.values()
        .as_slice()
        .iter()
        .zip(m.valid().as_slice())
        .filter(|(_, ok)| **ok)
        .map(|(v, _)| *v as f64)
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

/// Maps `est` affinely so its valid min and max land on those of `gt`.
pub fn affine_normalize_to_gt(est: &DisparityMap, gt: &DisparityMap) -> Result<DisparityMap> {
    let (emin, emax) = valid_range(est).ok_or_else(|| Error::Insufficient("estimate has no valid cell".into()))?;
    let (gmin, gmax) = valid_range(gt).ok_or_else(|| Error::Insufficient("ground truth has no valid cell".into()))?;
    if emax <= emin {
        return Err(Error::Domain("estimate has zero range".into()));
    }
    let scale = (gmax - gmin) / (emax - emin);
    let values = est.values().map(|v| (gmin + (*v as f64 - emin) * scale) as f32);
    DisparityMap::new(values, est.valid().clone(), est.source)
}

/// Full-pixel disparity `f·B / depth − doffs`; nonpositive depths and
/// negative disparities are invalid.
pub fn depth_from_monocular(depth: &Raster<f32>, focal: f64, baseline: f64, doffs: f64) -> Result<DisparityMap> {
    if !(focal > 0.0 && baseline > 0.0 && doffs.is_finite()) {
        return Err(Error::Domain("focal length and baseline must be positive".into()));
    }
    let disp = depth.map(|z| {
        let z = *z as f64;
        if z.is_finite() && z > 0.0 {
            focal * baseline / z - doffs
        } else {
            f64::NAN
        }
    });
    let valid = disp.map(|d| d.is_finite() && *d >= 0.0);
    DisparityMap::new(disp.map(|d| *d as f32), valid, MapSource::Filled)
}
