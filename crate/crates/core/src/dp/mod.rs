//! Per-line dynamic program over cyclopean states `[O, d]`.
//!
//! Each x2 column holds one state. The cost of a path is
//! `Σ λ·O(x) − ε·O(x)·O(x−½) + (1 − O(x))·FM(x, d(x))`, transitions move
//! the disparity by at most one half-step, and visible states are only
//! allowed where the match is inside both images.

mod brute;
mod machine;
mod subpixel;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costvolume::MatchDistanceSlice;
use crate::error::{Error, Result};
use crate::geometry::EpipolarGeometry;

pub use brute::{brute_force_line, BRUTE_FORCE_MAX_ND, BRUTE_FORCE_MAX_NX};
pub use subpixel::subpixel_refine;

use machine::{kinds, pair_cost, start_allowed, terminal_key, transition_allowed, transition_key, State};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DPParams {
    /// Unary cost of an occluded cell.
    pub lambda: f64,
    /// Bonus for two adjacent occluded cells.
    pub epsilon: f64,
    /// Keep each occlusion run direction-consistent so the disparity jump
    /// across it equals its length; off gives the bare six-neighbour rule.
    pub strict_gc1_runs: bool,
    pub subpixel_refine: bool,
}

impl Default for DPParams {
    fn default() -> Self {
        Self {
            lambda: 0.4,
            epsilon: 0.05,
            strict_gc1_runs: true,
            subpixel_refine: false,
        }
    }
}

impl DPParams {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || !self.epsilon.is_finite() {
            return Err(Error::Domain("lambda and epsilon must be finite".into()));
        }
        if self.lambda < 0.0 || self.epsilon < 0.0 {
            return Err(Error::Domain("lambda and epsilon must be non-negative".into()));
        }
        if self.epsilon >= self.lambda {
            return Err(Error::Domain(format!(
                "epsilon ({}) must be below lambda ({})",
                self.epsilon, self.lambda
            )));
        }
        Ok(())
    }
}

/// Optimal path of one epipolar line, indexed by x2.
#[derive(Clone, Debug, PartialEq)]
pub struct LineSolution {
    pub e: usize,
    pub occluded: Vec<bool>,
    pub d2: Vec<u32>,
    pub homogeneous: Vec<bool>,
    pub data_mask: Vec<bool>,
    pub cost: f64,
    /// Decimal cyclopean disparity per x2, when refinement ran.
    pub refined_d: Option<Vec<f64>>,
}

impl LineSolution {
    /// Wraps a path and derives the homogeneity and data masks.
    pub fn from_path(e: usize, occluded: Vec<bool>, d2: Vec<u32>, cost: f64) -> Result<Self> {
        if occluded.len() != d2.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} occlusion flags for {} disparities",
                occluded.len(),
                d2.len()
            )));
        }
        let n = d2.len();
        Ok(detect_homogeneous(LineSolution {
            e,
            occluded,
            d2,
            homogeneous: vec![false; n],
            data_mask: vec![false; n],
            cost,
            refined_d: None,
        }))
    }

    pub fn len(&self) -> usize {
        self.d2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d2.is_empty()
    }

    pub fn occluded_count(&self) -> usize {
        self.occluded.iter().filter(|o| **o).count()
    }

    pub fn homogeneous_count(&self) -> usize {
        self.homogeneous.iter().filter(|o| **o).count()
    }

    /// Decimal cyclopean disparity at `x2` (refined when available).
    pub fn disparity(&self, x2: usize) -> f64 {
        match &self.refined_d {
            Some(r) => r[x2],
            None => self.d2[x2] as f64 / 2.0,
        }
    }
}

/// All lines of an image.
#[derive(Clone, Debug, PartialEq)]
pub struct CyclopeanSolution {
    pub geometry: EpipolarGeometry,
    pub lines: Vec<LineSolution>,
}

impl CyclopeanSolution {
    pub fn new(geometry: EpipolarGeometry, lines: Vec<LineSolution>) -> Result<Self> {
        if lines.len() != geometry.height {
            return Err(Error::DimensionMismatch(format!(
                "{} lines for an image of height {}",
                lines.len(),
                geometry.height
            )));
        }
        if let Some(l) = lines.iter().find(|l| l.len() != geometry.nx()) {
            return Err(Error::DimensionMismatch(format!(
                "line {} has {} cells, expected {}",
                l.e,
                l.len(),
                geometry.nx()
            )));
        }
        Ok(Self { geometry, lines })
    }
}

#[inline]
fn unary(slice: &MatchDistanceSlice, x2: usize, s: State, lambda: f64) -> f64 {
    if s.kind.occluded() {
        lambda
    } else if slice.valid(x2, s.d) {
        slice.fm(x2, s.d)
    } else {
        f64::INFINITY
    }
}

/// Minimum-cost path for one line (Viterbi over `(d2, kind)` states).
pub fn solve_line(slice: &MatchDistanceSlice, params: &DPParams) -> Result<LineSolution> {
    params.validate()?;
    let (nx, nd) = (slice.nx(), slice.nd());
    if nd == 0 || nx == 0 {
        return Err(Error::Domain("slice has no cells".into()));
    }
    if !(0..nx).any(|x| (0..nd).any(|d| slice.valid(x, d))) {
        return Err(Error::DegenerateLine(slice.line()));
    }
    let ks = kinds(params.strict_gc1_runs);
    let nk = ks.len();
    let ns = nd * nk;
    let state = |i: usize| State { kind: ks[i % nk], d: i / nk };

    let mut cost = vec![f64::INFINITY; ns];
    let mut next = vec![f64::INFINITY; ns];
    let mut back = vec![u32::MAX; nx * ns];

    for (i, c) in cost.iter_mut().enumerate() {
        let s = state(i);
        if start_allowed(s) {
            *c = unary(slice, 0, s, params.lambda);
        }
    }

    for x2 in 1..nx {
        for (i, slot) in next.iter_mut().enumerate() {
            let s = state(i);
            let u = unary(slice, x2, s, params.lambda);
            if u == f64::INFINITY {
                *slot = f64::INFINITY;
                continue;
            }
            let mut best = f64::INFINITY;
            let mut best_key = (u8::MAX, usize::MAX, usize::MAX, u8::MAX);
            let mut best_p = u32::MAX;
            let lo = s.d.saturating_sub(1);
            let hi = (s.d + 1).min(nd - 1);
            for pd in lo..=hi {
                for (pk, kind) in ks.iter().enumerate() {
                    let p = State { kind: *kind, d: pd };
                    let pi = pd * nk + pk;
                    if cost[pi] == f64::INFINITY || !transition_allowed(p, s) {
                        continue;
                    }
                    let cand = cost[pi] + pair_cost(p, s, params.epsilon);
                    let key = transition_key(p, s);
                    if cand < best || (cand == best && key < best_key) {
                        best = cand;
                        best_key = key;
                        best_p = pi as u32;
                    }
                }
            }
            *slot = if best_p == u32::MAX { f64::INFINITY } else { best + u };
            back[x2 * ns + i] = best_p;
        }
        std::mem::swap(&mut cost, &mut next);
    }

    let (mut cur, total) = cost
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_finite())
        .min_by(|(a, ca), (b, cb)| {
            ca.total_cmp(cb)
                .then_with(|| terminal_key(state(*a)).cmp(&terminal_key(state(*b))))
        })
        .map(|(i, c)| (i, *c))
        .ok_or(Error::DegenerateLine(slice.line()))?;

    let mut occluded = vec![false; nx];
    let mut d2 = vec![0u32; nx];
    for x2 in (0..nx).rev() {
        let s = state(cur);
        occluded[x2] = s.kind.occluded();
        d2[x2] = s.d as u32;
        if x2 > 0 {
            cur = back[x2 * ns + cur] as usize;
        }
    }
    LineSolution::from_path(slice.line(), occluded, d2, total)
}

/// Flags both ends of every occluded pair whose disparity does not change,
/// and recomputes the data mask.
pub fn detect_homogeneous(mut sol: LineSolution) -> LineSolution {
    let n = sol.d2.len();
    sol.homogeneous = vec![false; n];
    for x in 1..n {
        if sol.occluded[x] && sol.occluded[x - 1] && sol.d2[x] == sol.d2[x - 1] {
            sol.homogeneous[x] = true;
            sol.homogeneous[x - 1] = true;
        }
    }
    sol.data_mask = (0..n)
        .map(|x| !sol.occluded[x] && !sol.homogeneous[x])
        .collect();
    sol
}

/// A maximal occlusion run whose flanking disparity jump differs from its
/// length. Positions are the visible cells on either side.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gc1Violation {
    pub left_flank: usize,
    pub right_flank: usize,
    pub jump: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcReport {
    pub gc2_ok: bool,
    pub gc1_violations: Vec<Gc1Violation>,
    /// Adjacent occluded, non-homogeneous pairs whose step is not ±1.
    pub local_violations: Vec<usize>,
}

impl GcReport {
    pub fn is_clean(&self) -> bool {
        self.gc2_ok && self.gc1_violations.is_empty() && self.local_violations.is_empty()
    }
}

pub fn check_gc(sol: &LineSolution) -> GcReport {
    let n = sol.d2.len();
    let gc2_ok = sol.occluded.len() == n
        && sol.homogeneous.len() == n
        && sol.data_mask.len() == n
        && sol.refined_d.as_ref().is_none_or(|r| r.len() == n);
    if !gc2_ok {
        return GcReport {
            gc2_ok,
            ..Default::default()
        };
    }
    let mut report = GcReport {
        gc2_ok,
        ..Default::default()
    };
    for x in 1..n {
        if sol.occluded[x]
            && sol.occluded[x - 1]
            && !(sol.homogeneous[x] && sol.homogeneous[x - 1])
            && sol.d2[x].abs_diff(sol.d2[x - 1]) != 1
        {
            report.local_violations.push(x);
        }
    }
    let mut x = 0;
    while x < n {
        if !sol.occluded[x] {
            x += 1;
            continue;
        }
        let start = x;
        while x < n && sol.occluded[x] {
            x += 1;
        }
        let end = x; // exclusive
        if start == 0 || end == n || sol.homogeneous[start..end].iter().any(|h| *h) {
            continue;
        }
        let (a, b) = (start - 1, end);
        let jump = sol.d2[b] as i64 - sol.d2[a] as i64;
        if jump.unsigned_abs() as usize != b - a {
            report.gc1_violations.push(Gc1Violation {
                left_flank: a,
                right_flank: b,
                jump,
            });
        }
    }
    report
}

/// Re-evaluates the path cost in the same summation order as the solver.
pub fn path_cost(slice: &MatchDistanceSlice, params: &DPParams, occluded: &[bool], d2: &[u32]) -> f64 {
    let mut total = 0.0;
    for x in 0..occluded.len() {
        if x > 0 && occluded[x] && occluded[x - 1] {
            total += -params.epsilon;
        }
        let u = if occluded[x] {
            params.lambda
        } else if slice.valid(x, d2[x] as usize) {
            slice.fm(x, d2[x] as usize)
        } else {
            f64::INFINITY
        };
        total = if x == 0 { u } else { total + u };
    }
    total
}

/// Solves every line independently on a pool of `parallelism` threads.
pub fn solve_all(slices: &[MatchDistanceSlice], geometry: &EpipolarGeometry, params: &DPParams, parallelism: usize) -> Result<CyclopeanSolution> {
    params.validate()?;
    if slices.len() != geometry.height {
        return Err(Error::DimensionMismatch(format!(
            "{} slices for {} lines",
            slices.len(),
            geometry.height
        )));
    }
    let solve = |slice: &MatchDistanceSlice| -> Result<LineSolution> {
        let sol = solve_line(slice, params)?;
        Ok(if params.subpixel_refine {
            subpixel_refine(slice, sol)?
        } else {
            sol
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    let results: Vec<Result<LineSolution>> = pool.install(|| slices.par_iter().map(solve).collect());
    let mut lines = Vec::with_capacity(results.len());
    for (e, r) in results.into_iter().enumerate() {
        lines.push(r.map_err(|source| Error::Line {
            line: e,
            source: Box::new(source),
        })?);
    }
    CyclopeanSolution::new(geometry.clone(), lines)
}
