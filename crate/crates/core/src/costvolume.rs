//! Feature-match distances over the cyclopean (x, d) grid of each line.
//!
//! Cell `(x2, d2)` compares the left sample at half-index `x2 + d2` with the
//! right sample at half-index `x2 - d2`. Similarities are dot products and
//! distances are `1 - FMS / max(FMS)`, clamped to `[0, 1]`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVolume;
use crate::geometry::EpipolarGeometry;
use crate::io::pgm;
use crate::raster::Raster;

/// Scope of the `max(FMS)` normalizer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NormScope {
    #[default]
    Line,
    Global,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchDistanceSlice {
    e: usize,
    nx: usize,
    nd: usize,
    fm: Vec<f64>,
    valid: Vec<bool>,
    fm_max_used: f64,
    normalizer_fallback: bool,
}

impl MatchDistanceSlice {
    /// Builds a slice from precomputed distances. Invalid cells are forced to
    /// the worst distance.
    pub fn from_raw(e: usize, nx: usize, nd: usize, mut fm: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if nx == 0 || nd == 0 {
            return Err(Error::Domain("slice with an empty dimension".into()));
        }
        if fm.len() != nx * nd || valid.len() != nx * nd {
            return Err(Error::DimensionMismatch(format!(
                "slice {nx}x{nd} needs {} cells",
                nx * nd
            )));
        }
        for (v, ok) in fm.iter_mut().zip(&valid) {
            if !ok {
                *v = 1.0;
            } else if !(0.0..=1.0).contains(v) {
                return Err(Error::Domain(format!("distance {v} outside [0, 1]")));
            }
        }
        if !valid.iter().any(|v| *v) {
            return Err(Error::DegenerateLine(e));
        }
        Ok(Self {
            e,
            nx,
            nd,
            fm,
            valid,
            fm_max_used: 1.0,
            normalizer_fallback: false,
        })
    }

    fn from_fms(e: usize, nx: usize, nd: usize, fms: &[f64], valid: Vec<bool>, normalizer: f64) -> Result<Self> {
        if !valid.iter().any(|v| *v) {
            return Err(Error::DegenerateLine(e));
        }
        let (norm, fallback) = if normalizer > 0.0 && normalizer.is_finite() {
            (normalizer, false)
        } else {
            (1.0, true)
        };
        let fm = fms
            .iter()
            .zip(&valid)
            .map(|(s, ok)| if *ok { (1.0 - s / norm).clamp(0.0, 1.0) } else { 1.0 })
            .collect();
        Ok(Self {
            e,
            nx,
            nd,
            fm,
            valid,
            fm_max_used: norm,
            normalizer_fallback: fallback,
        })
    }

    pub fn line(&self) -> usize {
        self.e
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nd(&self) -> usize {
        self.nd
    }

    #[inline]
    pub fn fm(&self, x2: usize, d2: usize) -> f64 {
        self.fm[x2 * self.nd + d2]
    }

    #[inline]
    pub fn valid(&self, x2: usize, d2: usize) -> bool {
        self.valid[x2 * self.nd + d2]
    }

    /// Distances of column `x2`, indexed by `d2`.
    pub fn column(&self, x2: usize) -> &[f64] {
        &self.fm[x2 * self.nd..(x2 + 1) * self.nd]
    }

    pub fn fm_max_used(&self) -> f64 {
        self.fm_max_used
    }

    /// Set when the line's maximum similarity was not positive and the
    /// normalizer fell back to 1.
    pub fn normalizer_fallback(&self) -> bool {
        self.normalizer_fallback
    }
}

/// Closed-form validity of cell `(x2, d2)` for an image of `width` pixels.
#[inline]
pub fn cell_valid(x2: usize, d2: usize, width: usize, nd: usize) -> bool {
    d2 < nd && x2 + d2 < 2 * width && x2 >= d2
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(p, q)| *p as f64 * *q as f64).sum()
}

/// Similarity of cell `(x2, d2)` on line `e`; `None` when an implied sample
/// falls outside the image.
pub fn fms(fl: &FeatureVolume, fr: &FeatureVolume, e: usize, x2: usize, d2: usize) -> Option<f64> {
    debug_assert!(fl.doubled() && fr.doubled());
    let n2 = fl.width_samples();
    if e >= fl.height() || x2 < d2 || x2 + d2 >= n2 {
        return None;
    }
    Some(dot(fl.sample(e, x2 + d2), fr.sample(e, x2 - d2)))
}

fn check_pair(fl: &FeatureVolume, fr: &FeatureVolume, geom: &EpipolarGeometry, doubled: bool) -> Result<()> {
    if fl.doubled() != doubled || fr.doubled() != doubled {
        return Err(Error::Usage(format!(
            "expected {} feature volumes",
            if doubled { "doubled" } else { "native-width" }
        )));
    }
    if fl.channels() != fr.channels() {
        return Err(Error::DimensionMismatch(format!(
            "left has {} channels, right has {}",
            fl.channels(),
            fr.channels()
        )));
    }
    fl.check_dims(geom.height, geom.width)?;
    fr.check_dims(geom.height, geom.width)
}

fn raw_line(fl: &FeatureVolume, fr: &FeatureVolume, e: usize, geom: &EpipolarGeometry) -> (Vec<f64>, Vec<bool>, f64) {
    let (nx, nd) = (geom.nx(), geom.nd());
    let mut fmsv = vec![0.0; nx * nd];
    let mut valid = vec![false; nx * nd];
    let mut max = f64::NEG_INFINITY;
    for x2 in 0..nx {
        for d2 in 0..nd {
            if let Some(s) = fms(fl, fr, e, x2, d2) {
                fmsv[x2 * nd + d2] = s;
                valid[x2 * nd + d2] = true;
                max = max.max(s);
            }
        }
    }
    (fmsv, valid, max)
}

/// Distance slice of line `e` from doubled volumes, normalized per line.
pub fn build_slice(fl: &FeatureVolume, fr: &FeatureVolume, e: usize, geom: &EpipolarGeometry) -> Result<MatchDistanceSlice> {
    check_pair(fl, fr, geom, true)?;
    if e >= geom.height {
        return Err(Error::Domain(format!("line {e} outside 0..{}", geom.height)));
    }
    let (fmsv, valid, max) = raw_line(fl, fr, e, geom);
    MatchDistanceSlice::from_fms(e, geom.nx(), geom.nd(), &fmsv, valid, max)
}

/// Same as [`build_slice`] but interpolating native-width volumes on the fly.
pub fn build_slice_native(fl: &FeatureVolume, fr: &FeatureVolume, e: usize, geom: &EpipolarGeometry) -> Result<MatchDistanceSlice> {
    check_pair(fl, fr, geom, false)?;
    let (nx, nd, n2) = (geom.nx(), geom.nd(), 2 * geom.width);
    let mut fmsv = vec![0.0; nx * nd];
    let mut valid = vec![false; nx * nd];
    let mut max = f64::NEG_INFINITY;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for x2 in 0..nx {
        for d2 in 0..nd {
            if x2 < d2 || x2 + d2 >= n2 {
                continue;
            }
            fl.half_sample(e, x2 + d2, &mut a);
            fr.half_sample(e, x2 - d2, &mut b);
            let s = dot(&a, &b);
            fmsv[x2 * nd + d2] = s;
            valid[x2 * nd + d2] = true;
            max = max.max(s);
        }
    }
    MatchDistanceSlice::from_fms(e, nx, nd, &fmsv, valid, max)
}

/// Builds all lines' slices from doubled volumes, in parallel.
pub fn build_slices(
    fl: &FeatureVolume,
    fr: &FeatureVolume,
    geom: &EpipolarGeometry,
    scope: NormScope,
) -> Result<Vec<MatchDistanceSlice>> {
    check_pair(fl, fr, geom, true)?;
    let raws: Vec<_> = (0..geom.height)
        .into_par_iter()
        .map(|e| raw_line(fl, fr, e, geom))
        .collect();
    let global = raws.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    raws.into_iter()
        .enumerate()
        .map(|(e, (fmsv, valid, max))| {
            let norm = match scope {
                NormScope::Line => max,
                NormScope::Global => global,
            };
            MatchDistanceSlice::from_fms(e, geom.nx(), geom.nd(), &fmsv, valid, norm)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SliceFormat {
    Csv,
    Pgm,
}

/// Slice as an 8-bit image: column `x2`, row `d2`, black = good match.
pub fn slice_image(slice: &MatchDistanceSlice) -> Raster<u8> {
    Raster::from_fn(slice.nx, slice.nd, |x2, d2| {
        (slice.fm(x2, d2) * 255.0).round().clamp(0.0, 255.0) as u8
    })
}

pub fn export_slice(slice: &MatchDistanceSlice, format: SliceFormat, path: &Path) -> Result<()> {
    match format {
        SliceFormat::Pgm => pgm::write_pgm(&slice_image(slice), path),
        SliceFormat::Csv => {
            let mut s = String::from("x2");
            for d2 in 0..slice.nd {
                write!(s, ",{d2}").unwrap();
            }
            s.push('\n');
            for x2 in 0..slice.nx {
                write!(s, "{x2}").unwrap();
                for d2 in 0..slice.nd {
                    write!(s, ",{}", slice.fm(x2, d2)).unwrap();
                }
                s.push('\n');
            }
            fs::write(path, s).map_err(|e| Error::io(path, e))
        }
    }
}

/// Reads back the distance matrix written by [`export_slice`] in CSV form,
/// as `[x2][d2]`.
pub fn read_slice_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(path, "empty file"))?;
    let nd = header.split(',').count().saturating_sub(1);
    lines
        .enumerate()
        .map(|(i, line)| {
            let vals: Vec<f64> = line
                .split(',')
                .skip(1)
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, format!("row {i}: {e}")))?;
            if vals.len() != nd {
                return Err(Error::parse(path, format!("row {i} has {} values, header {nd}", vals.len())));
            }
            Ok(vals)
        })
        .collect()
}
