use super::LineSolution;
use crate::costvolume::MatchDistanceSlice;
use crate::error::{Error, Result};

/// Parabola fit through the distances at `d2 - 1`, `d2`, `d2 + 1` for every
/// data cell with an interior disparity; other cells keep `d2 / 2`.
///
/// The offset is in cyclopean units and clamped to ±1/2.
pub fn subpixel_refine(slice: &MatchDistanceSlice, mut sol: LineSolution) -> Result<LineSolution> {
    if sol.len() != slice.nx() {
        return Err(Error::DimensionMismatch(format!(
            "solution has {} cells, slice {}",
            sol.len(),
            slice.nx()
        )));
    }
    let nd = slice.nd();
    let refined = (0..sol.len())
        .map(|x2| {
            let d2 = sol.d2[x2] as usize;
            let base = d2 as f64 / 2.0;
            if !sol.data_mask[x2] || d2 == 0 || d2 + 1 >= nd {
                return base;
            }
            if !slice.valid(x2, d2 - 1) || !slice.valid(x2, d2 + 1) {
                return base;
            }
            let (lo, mid, hi) = (slice.fm(x2, d2 - 1), slice.fm(x2, d2), slice.fm(x2, d2 + 1));
            let curvature = lo - 2.0 * mid + hi;
            if curvature <= 0.0 {
                return base;
            }
            let offset = 0.5 * (lo - hi) / (2.0 * curvature);
            base + offset.clamp(-0.5, 0.5)
        })
        .collect();
    sol.refined_d = Some(refined);
    Ok(sol)
}
