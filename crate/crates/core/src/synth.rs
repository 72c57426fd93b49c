//! Synthetic rectified stereo pairs with analytic ground truth: layered
//! random-dot stereograms and slanted planes.
//!
//! Surfaces are fronto-parallel rectangles (or planes) over a background
//! that fills the whole view. Where several surfaces project to the same
//! pixel the one with the larger disparity is in front.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dp::{check_gc, CyclopeanSolution, GcReport, LineSolution};
use crate::error::{Error, Result};
use crate::fill::{DisparityMap, MapSource, MonocularPrior};
use crate::geometry::EpipolarGeometry;
use crate::raster::{GrayImage, Mask, Raster};

/// Half-open pixel rectangle in left-image coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    fn contains_row(&self, y: usize) -> bool {
        (self.y0..self.y1).contains(&y)
    }

    fn contains(&self, l: f64, y: usize) -> bool {
        self.contains_row(y) && l >= self.x0 as f64 && l < self.x1 as f64
    }

    fn rows_overlap(&self, o: &Rect) -> bool {
        self.y0 < o.y1 && o.y0 < self.y1
    }

    fn overlaps(&self, o: &Rect) -> bool {
        self.rows_overlap(o) && self.x0 < o.x1 && o.x0 < self.x1
    }
}

/// Full-pixel disparity of a surface: a constant, or `α·l + β·y + γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Surface {
    Constant(u32),
    Plane { alpha: f64, beta: f64, gamma: f64 },
}

impl Default for Surface {
    fn default() -> Self {
        Surface::Constant(0)
    }
}

impl Surface {
    #[inline]
    fn at(&self, l: f64, y: usize) -> f64 {
        match *self {
            Surface::Constant(d) => d as f64,
            Surface::Plane { alpha, beta, gamma } => alpha * l + beta * y as f64 + gamma,
        }
    }

    /// Left coordinate seen at right coordinate `r`, solving `l − D(l) = r`.
    #[inline]
    fn left_of(&self, r: f64, y: usize) -> f64 {
        match *self {
            Surface::Constant(d) => r + d as f64,
            Surface::Plane { alpha, beta, gamma } => (r + beta * y as f64 + gamma) / (1.0 - alpha),
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, Surface::Constant(_))
    }

    /// Extreme values over a rectangle.
    fn range(&self, r: &Rect) -> (f64, f64) {
        let corners = [
            self.at(r.x0 as f64, r.y0),
            self.at(r.x1 as f64 - 1.0, r.y0),
            self.at(r.x0 as f64, r.y1 - 1),
            self.at(r.x1 as f64 - 1.0, r.y1 - 1),
        ];
        corners
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rect: Rect,
    pub disparity: Surface,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Texture {
    /// iid binary dots.
    #[default]
    Dots,
    /// Blurred uniform noise, for subpixel work.
    Smooth,
}

fn default_focal() -> f64 {
    500.0
}

fn default_baseline() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Cyclopean disparity cap of the scene geometry.
    pub max_disparity_c: u32,
    #[serde(default)]
    pub background: Surface,
    /// Back to front.
    #[serde(default)]
    pub layers: Vec<Layer>,
    pub dot_density: f64,
    pub seed: u64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub texture: Texture,
    #[serde(default = "default_focal")]
    pub focal_length_px: f64,
    #[serde(default = "default_baseline")]
    pub baseline: f64,
}

impl SceneSpec {
    pub fn new(width: usize, height: usize, max_disparity_c: u32, seed: u64) -> Self {
        Self {
            width,
            height,
            max_disparity_c,
            background: Surface::Constant(0),
            layers: Vec::new(),
            dot_density: 0.5,
            seed,
            noise_sigma: 0.0,
            texture: Texture::Dots,
            focal_length_px: default_focal(),
            baseline: default_baseline(),
        }
    }

    pub fn geometry(&self) -> Result<EpipolarGeometry> {
        EpipolarGeometry::new(
            self.focal_length_px,
            self.baseline,
            self.width,
            self.height,
            self.max_disparity_c,
            0.0,
        )
    }

    /// Whether every surface has a constant integer disparity, so the
    /// ground truth lies exactly on the half-pixel grid.
    pub fn is_integral(&self) -> bool {
        self.background.is_constant() && self.layers.iter().all(|l| l.disparity.is_constant())
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry().map_err(|e| Error::Scene(e.to_string()))?;
        let bad = |msg: String| Err(Error::Scene(msg));
        if !(self.dot_density > 0.0 && self.dot_density <= 1.0) {
            return bad(format!("dot density {} outside (0, 1]", self.dot_density));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma {} must be finite and >= 0", self.noise_sigma));
        }
        let dmax = 2.0 * self.max_disparity_c as f64;
        let full = Rect {
            x0: 0,
            y0: 0,
            x1: self.width,
            y1: self.height,
        };
        for s in std::iter::once(&self.background).chain(self.layers.iter().map(|l| &l.disparity)) {
            if let Surface::Plane { alpha, beta, gamma } = s {
                if !(alpha.is_finite() && beta.is_finite() && gamma.is_finite()) || alpha.abs() >= 0.5 {
                    return bad("plane coefficients must be finite with |alpha| < 0.5".into());
                }
            }
        }
        let (bg_lo, bg_hi) = self.background.range(&full);
        if bg_lo < 0.0 || bg_hi > dmax {
            return bad(format!("background disparity outside [0, {dmax}]"));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let r = &layer.rect;
            if r.x0 >= r.x1 || r.y0 >= r.y1 || r.x1 > self.width || r.y1 > self.height {
                return bad(format!("layer {i}: rectangle {r:?} empty or out of bounds"));
            }
            let (lo, hi) = layer.disparity.range(r);
            if lo <= 0.0 || hi > dmax {
                return bad(format!("layer {i}: disparity outside (0, {dmax}]"));
            }
            let (_, under_hi) = self.background.range(r);
            if lo <= under_hi {
                return bad(format!("layer {i}: not in front of the background"));
            }
            for (j, other) in self.layers[..i].iter().enumerate() {
                if other.rect.overlaps(r) && lo <= other.disparity.range(&other.rect).1 {
                    return bad(format!("layer {i} overlaps layer {j} without increasing disparity"));
                }
            }
        }
        Ok(())
    }

    /// A random integer-disparity scene with `layers` rectangles that are
    /// pairwise nested or disjoint, separated by more than the largest
    /// disparity jump so every discontinuity is isolated. Rectangles are at
    /// least that separation wide and [`MIN_LAYER_ROWS`] tall.
    pub fn random(seed: u64, width: usize, height: usize, max_disparity_c: u32, layers: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        let dmax = 2 * max_disparity_c;
        let mut spec = SceneSpec::new(width, height, max_disparity_c, seed);
        spec.dot_density = rng.random_range(0.4..=0.6);
        if layers as u32 >= dmax {
            return Err(Error::Scene(format!("{layers} layers need more than {dmax} disparity levels")));
        }
        let bg = rng.random_range(0..dmax - layers as u32);
        spec.background = Surface::Constant(bg);
        let mut disparities: Vec<u32> = Vec::new();
        while disparities.len() < layers {
            let d = rng.random_range(bg + 1..=dmax);
            if !disparities.contains(&d) {
                disparities.push(d);
            }
        }
        disparities.sort_unstable();
        let margin = disparities.last().map_or(0, |d| (d - bg) as usize) + 2;
        let mut rects: Vec<Rect> = Vec::new();
        let min_rows = MIN_LAYER_ROWS.min(height);
        if width >= 3 * margin && height >= 1 {
            for _ in 0..50 {
                rects.clear();
                for _ in 0..200 {
                    if rects.len() == layers {
                        break;
                    }
                    let x0 = rng.random_range(margin..=width - 2 * margin);
                    let x1 = rng.random_range(x0 + margin..=width - margin);
                    let y0 = rng.random_range(0..=height - min_rows);
                    let y1 = rng.random_range(y0 + min_rows..=height.min(y0 + min_rows + height / 2));
                    let cand = Rect { x0, y0, x1, y1 };
                    let inside = |a: &Rect, b: &Rect| a.x0 >= b.x0 + margin && a.x1 + margin <= b.x1;
                    let compatible = rects.iter().all(|o| {
                        !o.rows_overlap(&cand)
                            || cand.x0 >= o.x1 + margin
                            || o.x0 >= cand.x1 + margin
                            || inside(&cand, o)
                            || inside(o, &cand)
                    });
                    if compatible {
                        rects.push(cand);
                    }
                }
                if rects.len() == layers {
                    break;
                }
            }
        }
        if rects.len() < layers {
            return Err(Error::Scene(format!("could not place {layers} layers in {width}x{height}")));
        }
        // nesting depth orders the layers back to front
        let depths: Vec<usize> = rects
            .iter()
            .map(|r| {
                rects
                    .iter()
                    .filter(|o| *o != r && o.rows_overlap(r) && o.x0 < r.x0 && r.x1 < o.x1)
                    .count()
            })
            .collect();
        let mut order: Vec<usize> = (0..rects.len()).collect();
        order.sort_by_key(|&i| (depths[i], rects[i].x0, rects[i].y0));
        let rects: Vec<Rect> = order.into_iter().map(|i| rects[i]).collect();
        spec.layers = rects
            .into_iter()
            .zip(disparities)
            .map(|(rect, d)| Layer {
                rect,
                disparity: Surface::Constant(d),
            })
            .collect();
        spec.validate()?;
        Ok(spec)
    }

    /// A single slanted background plane with a smooth texture.
    pub fn slanted(seed: u64, width: usize, height: usize, max_disparity_c: u32) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51a7);
        let dmax = 2.0 * max_disparity_c as f64;
        let mut spec = SceneSpec::new(width, height, max_disparity_c, seed);
        spec.texture = Texture::Smooth;
        // keep the plane inside [1, dmax - 1] over the whole image
        let lo = 1.0 + rng.random_range(0.0..0.25) * dmax;
        let hi = dmax - 1.0 - rng.random_range(0.0..0.25) * dmax;
        let share: f64 = rng.random_range(0.3..0.7);
        let sx = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let sy = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let alpha = sx * share * (hi - lo) / (width - 1) as f64;
        let beta = sy * (1.0 - share) * (hi - lo) / (height.max(2) - 1) as f64;
        let gamma = lo - alpha.min(0.0) * (width - 1) as f64 - beta.min(0.0) * (height.max(2) - 1) as f64;
        spec.background = Surface::Plane { alpha, beta, gamma };
        spec.validate()?;
        Ok(spec)
    }
}

/// Exact answers for a generated scene.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub geometry: EpipolarGeometry,
    /// Present for integral scenes.
    pub cyclopean: Option<CyclopeanSolution>,
    /// Disparity of the front surface at every left pixel.
    pub left: DisparityMap,
    /// Left pixels hidden from the right eye.
    pub left_occlusion: Mask,
    /// Right pixels hidden from the left eye.
    pub right_occlusion: Mask,
}

#[derive(Clone, Debug)]
pub struct StereoScene {
    pub left: GrayImage,
    pub right: GrayImage,
    pub truth: GroundTruth,
}

struct Scene<'a> {
    spec: &'a SceneSpec,
    surfaces: Vec<(Option<Rect>, Surface)>,
}

impl Scene<'_> {
    fn covers(&self, k: usize, l: f64, y: usize) -> bool {
        match &self.surfaces[k].0 {
            None => true,
            Some(r) => r.contains(l, y),
        }
    }

    /// Front surface at left coordinate `l`.
    fn front_left(&self, l: f64, y: usize) -> (usize, f64) {
        let mut best = (0, self.surfaces[0].1.at(l, y));
        for k in 1..self.surfaces.len() {
            if self.covers(k, l, y) {
                let d = self.surfaces[k].1.at(l, y);
                if d >= best.1 {
                    best = (k, d);
                }
            }
        }
        best
    }

    /// Front surface at right coordinate `r`, with the left coordinate of
    /// the point seen there.
    fn front_right(&self, r: f64, y: usize) -> (usize, f64, f64) {
        let l0 = self.surfaces[0].1.left_of(r, y);
        let mut best = (0, l0, self.surfaces[0].1.at(l0, y));
        for k in 1..self.surfaces.len() {
            let l = self.surfaces[k].1.left_of(r, y);
            if self.covers(k, l, y) {
                let d = self.surfaces[k].1.at(l, y);
                if d >= best.2 {
                    best = (k, l, d);
                }
            }
        }
        best
    }

    fn width(&self) -> usize {
        self.spec.width
    }
}

const PAD_EXTRA: usize = 4;

/// Shortest layer drawn by [`SceneSpec::random`], in rows.
pub const MIN_LAYER_ROWS: usize = 4;

/// Per-surface texture over padded left coordinates.
struct Textures {
    pad: usize,
    layers: Vec<Raster<f32>>,
}

impl Textures {
    fn generate(spec: &SceneSpec, count: usize, rng: &mut ChaCha8Rng) -> Self {
        let pad = 2 * spec.max_disparity_c as usize + PAD_EXTRA;
        let w = spec.width + 2 * pad;
        let layers = (0..count)
            .map(|_| match spec.texture {
                Texture::Dots => Raster::from_fn(w, spec.height, |_, _| {
                    if rng.random_bool(spec.dot_density) {
                        1.0
                    } else {
                        0.0
                    }
                }),
                Texture::Smooth => smooth_texture(w, spec.height, rng),
            })
            .collect();
        Self { pad, layers }
    }

    /// Linear interpolation along the row; exact at integer positions.
    fn sample(&self, k: usize, l: f64, y: usize) -> f32 {
        let t = &self.layers[k];
        let p = (l + self.pad as f64).clamp(0.0, (t.width() - 1) as f64);
        let i = p.floor() as usize;
        let f = p - i as f64;
        if f == 0.0 || i + 1 >= t.width() {
            return *t.get(i, y);
        }
        ((1.0 - f) * *t.get(i, y) as f64 + f * *t.get(i + 1, y) as f64) as f32
    }
}

fn smooth_texture(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Raster<f32> {
    let mut t: Vec<f64> = (0..w * h).map(|_| rng.random::<f64>()).collect();
    // three passes of a [1 2 1] blur in each direction
    for _ in 0..3 {
        let prev = t.clone();
        for y in 0..h {
            for x in 0..w {
                let a = prev[y * w + x.saturating_sub(1)];
                let c = prev[y * w + (x + 1).min(w - 1)];
                t[y * w + x] = 0.25 * a + 0.5 * prev[y * w + x] + 0.25 * c;
            }
        }
        let prev = t.clone();
        for y in 0..h {
            for x in 0..w {
                let a = prev[y.saturating_sub(1) * w + x];
                let c = prev[(y + 1).min(h - 1) * w + x];
                t[y * w + x] = 0.25 * a + 0.5 * prev[y * w + x] + 0.25 * c;
            }
        }
    }
    let (lo, hi) = t
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    Raster::from_vec(w, h, t.iter().map(|v| ((v - lo) / span) as f32).collect()).expect("texture size")
}

/// Walks outward from a visible flank, stepping the disparity by ±1 and
/// bouncing off the ends of `[0, nd)`, so no occluded pair repeats a value.
fn bounce_fill(d2: &mut [u32], cells: impl Iterator<Item = usize>, start: u32, nd: u32) {
    let mut d = start as i64;
    let mut step: i64 = if start > 0 { -1 } else { 1 };
    for x in cells {
        if nd > 1 {
            if d + step < 0 || d + step >= nd as i64 {
                step = -step;
            }
            d += step;
        }
        d2[x] = d as u32;
    }
}

/// Cyclopean ground truth for one row of an integral scene.
fn cyclopean_line(e: usize, width: usize, nd: usize, matches: &[(usize, u32)]) -> Result<LineSolution> {
    let nx = 2 * width;
    let mut visible = vec![false; nx];
    let mut d2 = vec![0u32; nx];
    for &(l, d) in matches {
        let x2 = 2 * l - d as usize;
        visible[x2] = true;
        d2[x2] = d;
    }
    for &(l, d) in matches {
        let x2 = 2 * l - d as usize;
        for n in [x2.wrapping_sub(1), x2 + 1] {
            if n < nx && crate::costvolume::cell_valid(n, d as usize, width, nd) && !visible[n] {
                visible[n] = true;
                d2[n] = d;
            }
        }
    }
    let anchors: Vec<usize> = (0..nx).filter(|x| visible[*x]).collect();
    let nd32 = nd as u32;
    match (anchors.first(), anchors.last()) {
        (None, _) | (_, None) => bounce_fill(&mut d2, 0..nx, 0, nd32),
        (Some(&first), Some(&last)) => {
            let (df, dl) = (d2[first], d2[last]);
            bounce_fill(&mut d2, (0..first).rev(), df, nd32);
            bounce_fill(&mut d2, last + 1..nx, dl, nd32);
            for w in anchors.windows(2) {
                let (a, b) = (w[0], w[1]);
                if b == a + 1 {
                    continue;
                }
                let target = d2[b] as i64;
                let mut d = d2[a] as i64;
                let mut bounce = 1;
                for x in a + 1..b {
                    if d != target {
                        d += (target - d).signum();
                    } else {
                        // jump shorter than the run: alternate so no value repeats
                        d += if d + bounce >= nd as i64 || d + bounce < 0 { -bounce } else { bounce };
                        bounce = -bounce;
                    }
                    d2[x] = d as u32;
                }
            }
        }
    }
    let occluded = visible.iter().map(|v| !v).collect();
    LineSolution::from_path(e, occluded, d2, 0.0)
}

pub fn generate(spec: &SceneSpec) -> Result<StereoScene> {
    spec.validate()?;
    let geometry = spec.geometry()?;
    let scene = Scene {
        spec,
        surfaces: std::iter::once((None, spec.background))
            .chain(spec.layers.iter().map(|l| (Some(l.rect), l.disparity)))
            .collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let textures = Textures::generate(spec, scene.surfaces.len(), &mut rng);
    let (w, h) = (spec.width, spec.height);
    let last = (w - 1) as f64;

    let mut left = GrayImage::filled(w, h, 0.0);
    let mut right = GrayImage::filled(w, h, 0.0);
    let mut gt_left = Raster::filled(w, h, 0.0f32);
    let mut left_occ = Raster::filled(w, h, false);
    let mut right_occ = Raster::filled(w, h, false);
    let nd = geometry.nd();
    let mut lines = Vec::with_capacity(h);
    for y in 0..h {
        let mut matches = Vec::new();
        for l in 0..w {
            let lf = l as f64;
            let (k, d) = scene.front_left(lf, y);
            left.set(l, y, textures.sample(k, lf, y));
            gt_left.set(l, y, d as f32);
            let r = lf - d;
            let seen = (0.0..=last).contains(&r) && scene.front_right(r, y).0 == k;
            left_occ.set(l, y, !seen);
            if seen && spec.is_integral() {
                matches.push((l, d as u32));
            }
        }
        for r in 0..w {
            let (k, l, _) = scene.front_right(r as f64, y);
            right.set(r, y, textures.sample(k, l, y));
            let seen = (0.0..=last).contains(&l) && scene.front_left(l, y).0 == k;
            right_occ.set(r, y, !seen);
        }
        if spec.is_integral() {
            // matched right pixels must keep the left order
            if let Some(w) = matches.windows(2).find(|w| w[1].0 - w[1].1 as usize <= w[0].0 - w[0].1 as usize) {
                return Err(Error::Scene(format!(
                    "row {y}: left pixels {} and {} break the ordering constraint",
                    w[0].0, w[1].0
                )));
            }
            lines.push(cyclopean_line(y, scene.width(), nd, &matches)?);
        }
    }
    if spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Scene(e.to_string()))?;
        for img in [&mut left, &mut right] {
            for v in img.as_mut_slice() {
                *v = (*v as f64 + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32;
            }
        }
    }
    let cyclopean = if spec.is_integral() {
        Some(CyclopeanSolution::new(geometry.clone(), lines)?)
    } else {
        None
    };
    Ok(StereoScene {
        left,
        right,
        truth: GroundTruth {
            geometry,
            cyclopean,
            left: DisparityMap::dense(gt_left, MapSource::Gt)?,
            left_occlusion: left_occ,
            right_occlusion: right_occ,
        },
    })
}

/// Line-wise constraint report over the cyclopean ground truth.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GtReport {
    pub lines: Vec<(usize, GcReport)>,
}

impl GtReport {
    pub fn is_clean(&self) -> bool {
        self.lines.iter().all(|(_, r)| r.is_clean())
    }

    pub fn violations(&self) -> impl Iterator<Item = &(usize, GcReport)> {
        self.lines.iter().filter(|(_, r)| !r.is_clean())
    }
}

pub fn verify_gt(gt: &GroundTruth) -> GtReport {
    GtReport {
        lines: gt
            .cyclopean
            .iter()
            .flat_map(|c| c.lines.iter().map(|l| (l.e, check_gc(l))))
            .collect(),
    }
}

/// An imperfect monocular stand-in derived from the truth: gamma-warped,
/// box-blurred and min-max normalized.
pub fn prior_stand_in(gt: &DisparityMap, gamma: f64, blur_radius: usize) -> Result<MonocularPrior> {
    let (w, h) = (gt.width(), gt.height());
    let (lo, hi) = gt
        .values()
        .as_slice()
        .iter()
        .zip(gt.valid().as_slice())
        .filter(|(_, ok)| **ok)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
            (lo.min(*v as f64), hi.max(*v as f64))
        });
    if !(hi > lo) {
        return Err(Error::DegeneratePrior("ground truth has zero range".into()));
    }
    let warped = Raster::from_fn(w, h, |x, y| match gt.get(x, y) {
        Some(v) => ((v as f64 - lo) / (hi - lo)).powf(gamma),
        None => 0.0,
    });
    let r = blur_radius as isize;
    let blurred = Raster::from_fn(w, h, |x, y| {
        let (mut s, mut n) = (0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                let (xx, yy) = (x as isize + dx, y as isize + dy);
                if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                    s += *warped.get(xx as usize, yy as usize);
                    n += 1.0;
                }
            }
        }
        (s / n) as f32
    });
    MonocularPrior::normalize(&blurred)
}
