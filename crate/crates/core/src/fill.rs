//! Left-view disparity maps and gap completion from a monocular prior.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::CyclopeanSolution;
use crate::error::{Error, Result};
use crate::io::{pfm, pgm};
use crate::numeric::sum;
use crate::raster::{Mask, Raster};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSource {
    Dp,
    Filled,
    Gt,
}

/// Full-pixel disparity in the left view. Invalid cells hold `+inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    values: Raster<f32>,
    valid: Mask,
    pub source: MapSource,
}

impl DisparityMap {
    pub fn new(mut values: Raster<f32>, valid: Mask, source: MapSource) -> Result<Self> {
        if !values.same_dims(&valid) {
            return Err(Error::DimensionMismatch("disparity values and mask differ in size".into()));
        }
        for (i, (v, ok)) in values.as_mut_slice().iter_mut().zip(valid.as_slice()).enumerate() {
            if *ok {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::Domain(format!("disparity {v} at index {i} must be finite and >= 0")));
                }
            } else {
                *v = f32::INFINITY;
            }
        }
        Ok(Self { values, valid, source })
    }

    /// A fully valid map.
    pub fn dense(values: Raster<f32>, source: MapSource) -> Result<Self> {
        let valid = Raster::filled(values.width(), values.height(), true);
        Self::new(values, valid, source)
    }

    pub fn invalid(width: usize, height: usize, source: MapSource) -> Self {
        Self {
            values: Raster::filled(width, height, f32::INFINITY),
            valid: Raster::filled(width, height, false),
            source,
        }
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn values(&self) -> &Raster<f32> {
        &self.values
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        self.valid.get(x, y).then(|| *self.values.get(x, y))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_slice().iter().filter(|v| **v).count()
    }

    pub fn same_dims(&self, other: &DisparityMap) -> bool {
        self.values.same_dims(&other.values)
    }

    pub fn read(path: &Path, source: MapSource) -> Result<Self> {
        let img = pfm::read_pfm(path)?;
        Self::new(img.values, img.valid, source).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        pfm::write_pfm(&self.values, Some(&self.valid), path)
    }

    pub fn write_validity(&self, path: &Path) -> Result<()> {
        pgm::write_mask(&self.valid, path)
    }
}

/// Relative inverse depth in [0, 1], left view.
#[derive(Clone, Debug, PartialEq)]
pub struct MonocularPrior {
    values: Raster<f32>,
}

impl MonocularPrior {
    /// Min-max normalizes arbitrary finite values.
    pub fn normalize(raw: &Raster<f32>) -> Result<Self> {
        if let Some(v) = raw.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::DegeneratePrior(format!("non-finite value {v}")));
        }
        let (lo, hi) = raw
            .as_slice()
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if !(hi > lo) {
            return Err(Error::DegeneratePrior("prior is constant".into()));
        }
        let span = hi as f64 - lo as f64;
        Ok(Self {
            values: raw.map(|v| ((*v as f64 - lo as f64) / span) as f32),
        })
    }

    /// Wraps values already in [0, 1].
    pub fn from_normalized(values: Raster<f32>) -> Result<Self> {
        if let Some(v) = values.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("prior value {v} outside [0, 1]")));
        }
        Ok(Self { values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let img = pfm::read_pfm(path)?;
        if img.valid.as_slice().iter().any(|v| !v) {
            return Err(Error::parse(path, "prior contains invalid (+inf) cells"));
        }
        Self::normalize(&img.values).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn values(&self) -> &Raster<f32> {
        &self.values
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }
}

/// Writes the trusted cyclopean matches into the left view. A match at
/// `(x2, d2)` lands on left pixel `(x2 + d2) / 2` when that is integral; the
/// larger disparity wins on collisions.
pub fn project_to_left(sol: &CyclopeanSolution) -> DisparityMap {
    let g = &sol.geometry;
    let mut map = DisparityMap::invalid(g.width, g.height, MapSource::Dp);
    for line in &sol.lines {
        let y = line.e;
        for x2 in 0..line.len() {
            if !line.data_mask[x2] {
                continue;
            }
            let d2 = line.d2[x2] as usize;
            let l2 = x2 + d2;
            if l2 % 2 != 0 || l2 / 2 >= g.width {
                continue;
            }
            let l = l2 / 2;
            let v = match &line.refined_d {
                Some(r) => (2.0 * r[x2]) as f32,
                None => d2 as f32,
            };
            if !*map.valid.get(l, y) || v > *map.values.get(l, y) {
                map.values.set(l, y, v);
                map.valid.set(l, y, true);
            }
        }
    }
    map
}

fn check_prior_dims(prior: &MonocularPrior, dp: &DisparityMap) -> Result<()> {
    if prior.width() != dp.width() || prior.height() != dp.height() {
        return Err(Error::DimensionMismatch(format!(
            "prior {}x{} vs disparity {}x{}",
            prior.width(),
            prior.height(),
            dp.width(),
            dp.height()
        )));
    }
    Ok(())
}

/// Least-squares `(a, b)` with `a·prior + b ≈ dp` over valid cells.
pub fn affine_align(prior: &MonocularPrior, dp: &DisparityMap) -> Result<(f64, f64)> {
    check_prior_dims(prior, dp)?;
    let pairs: Vec<(f64, f64)> = prior
        .values
        .as_slice()
        .iter()
        .zip(dp.values.as_slice())
        .zip(dp.valid.as_slice())
        .filter(|(_, ok)| **ok)
        .map(|((p, d), _)| (*p as f64, *d as f64))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::Insufficient(format!(
            "{} valid disparity cells, need at least 2",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let pm = sum(pairs.iter().map(|p| p.0)) / n;
    let dm = sum(pairs.iter().map(|p| p.1)) / n;
    let sxx = sum(pairs.iter().map(|p| (p.0 - pm) * (p.0 - pm)));
    let sxy = sum(pairs.iter().map(|p| (p.0 - pm) * (p.1 - dm)));
    if sxx <= 1e-12 * n {
        return Err(Error::DegeneratePrior("prior is constant under the valid cells".into()));
    }
    let a = sxy / sxx;
    Ok((a, dm - a * pm))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FillMode {
    Affine,
    Poisson,
}

#[derive(Clone, Debug)]
pub struct FillOutcome {
    pub map: DisparityMap,
    pub a: f64,
    pub b: f64,
    pub regions: usize,
    /// False when some region stopped at the iteration cap.
    pub converged: bool,
}

const NEIGHBOURS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn gap_regions(valid: &Mask) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (valid.width(), valid.height());
    let mut seen = Raster::filled(w, h, false);
    let mut regions = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if *valid.get(x, y) || *seen.get(x, y) {
                continue;
            }
            seen.set(x, y, true);
            let mut region = vec![(x, y)];
            let mut i = 0;
            while i < region.len() {
                let (cx, cy) = region[i];
                i += 1;
                for (dx, dy) in NEIGHBOURS {
                    let (nx, ny) = (cx as isize + dx, cy as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if !*valid.get(nx, ny) && !*seen.get(nx, ny) {
                        seen.set(nx, ny, true);
                        region.push((nx, ny));
                    }
                }
            }
            regions.push(region);
        }
    }
    regions
}

struct RegionSystem {
    diag: Vec<f64>,
    /// Unknown neighbours per unknown.
    links: Vec<Vec<usize>>,
    rhs: Vec<f64>,
}

impl RegionSystem {
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..u.len() {
            out[i] = self.diag[i] * u[i] - self.links[i].iter().map(|&j| u[j]).sum::<f64>();
        }
    }
}

fn build_region_system(
    region: &[(usize, usize)],
    prior: &MonocularPrior,
    dp: &DisparityMap,
    index: &Raster<u32>,
    a: f64,
    b: f64,
) -> RegionSystem {
    let (w, h) = (dp.width() as isize, dp.height() as isize);
    let p = |x: usize, y: usize| *prior.values.get(x, y) as f64;
    let n = region.len();
    let mut diag = vec![0.0; n];
    let mut links = vec![Vec::with_capacity(4); n];
    let mut rhs = vec![0.0; n];
    for (i, &(x, y)) in region.iter().enumerate() {
        for (dx, dy) in NEIGHBOURS {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            diag[i] += 1.0;
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                // outside the image: tie to the affine fill
                rhs[i] += a * p(x, y) + b;
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            let guide = a * (p(x, y) - p(nx, ny));
            rhs[i] += guide;
            match dp.get(nx, ny) {
                Some(v) => rhs[i] += v as f64,
                None => links[i].push(*index.get(nx, ny) as usize),
            }
        }
    }
    RegionSystem { diag, links, rhs }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradient from `u`; returns whether the tolerance was met.
fn conjugate_gradient(sys: &RegionSystem, u: &mut [f64], max_iter: usize) -> bool {
    let n = u.len();
    let target = 1e-6 * dot(&sys.rhs, &sys.rhs).sqrt();
    let mut au = vec![0.0; n];
    sys.apply(u, &mut au);
    let mut r: Vec<f64> = sys.rhs.iter().zip(&au).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        if rr.sqrt() <= target {
            return true;
        }
        sys.apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let next = dot(&r, &r);
        let beta = next / rr;
        rr = next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    rr.sqrt() <= target
}

/// Completes invalid cells of `dp`. Valid cells are copied bit-for-bit.
pub fn fill_gaps(prior: &MonocularPrior, dp: &DisparityMap, mode: FillMode) -> Result<FillOutcome> {
    let (a, b) = affine_align(prior, dp)?;
    let regions = gap_regions(&dp.valid);
    if regions.is_empty() {
        return Ok(FillOutcome {
            map: dp.clone(),
            a,
            b,
            regions: 0,
            converged: true,
        });
    }
    let affine = |x: usize, y: usize| a * *prior.values.get(x, y) as f64 + b;
    let solved: Vec<(Vec<f64>, bool)> = match mode {
        FillMode::Affine => regions
            .iter()
            .map(|r| (r.iter().map(|&(x, y)| affine(x, y)).collect(), true))
            .collect(),
        FillMode::Poisson => {
            let mut index = Raster::filled(dp.width(), dp.height(), u32::MAX);
            for region in &regions {
                for (i, &(x, y)) in region.iter().enumerate() {
                    index.set(x, y, i as u32);
                }
            }
            regions
                .par_iter()
                .map(|region| {
                    let sys = build_region_system(region, prior, dp, &index, a, b);
                    let mut u: Vec<f64> = region.iter().map(|&(x, y)| affine(x, y)).collect();
                    let ok = conjugate_gradient(&sys, &mut u, 10 * region.len());
                    (u, ok)
                })
                .collect()
        }
    };
    let mut values = dp.values.clone();
    let converged = solved.iter().all(|s| s.1);
    for (region, (u, _)) in regions.iter().zip(&solved) {
        for (&(x, y), v) in region.iter().zip(u) {
            values.set(x, y, v.max(0.0) as f32);
        }
    }
    let valid = Raster::filled(dp.width(), dp.height(), true);
    Ok(FillOutcome {
        map: DisparityMap::new(values, valid, MapSource::Filled)?,
        a,
        b,
        regions: regions.len(),
        converged,
    })
}
