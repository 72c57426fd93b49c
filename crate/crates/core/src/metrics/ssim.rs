//! Masked SSIM: a Gaussian window whose weights are renormalized over the
//! jointly valid pixels it covers.

use crate::fill::DisparityMap;
use crate::numeric::CompensatedSum;

pub const SSIM_RADIUS: usize = 3;
pub const SSIM_SIGMA: f64 = 1.5;

fn kernel() -> [[f64; 2 * SSIM_RADIUS + 1]; 2 * SSIM_RADIUS + 1] {
    let mut k = [[0.0; 2 * SSIM_RADIUS + 1]; 2 * SSIM_RADIUS + 1];
    let r = SSIM_RADIUS as f64;
    for (j, row) in k.iter_mut().enumerate() {
        for (i, w) in row.iter_mut().enumerate() {
            let (dx, dy) = (i as f64 - r, j as f64 - r);
            *w = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        }
    }
    k
}

/// Mean SSIM over jointly valid window centres; `range` sets the
/// stabilizers `(0.01·range)²` and `(0.03·range)²`.
pub fn ssim_mean(est: &DisparityMap, gt: &DisparityMap, range: f64) -> f64 {
    let k = kernel();
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let (w, h) = (est.width(), est.height());
    let mut total = CompensatedSum::new();
    let mut centres = 0usize;
    let r = SSIM_RADIUS as isize;
    for cy in 0..h {
        for cx in 0..w {
            if est.get(cx, cy).is_none() || gt.get(cx, cy).is_none() {
                continue;
            }
            let mut samples = Vec::with_capacity(49);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (x, y) = (cx as isize + dx, cy as isize + dy);
                    if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                        continue;
                    }
                    let (x, y) = (x as usize, y as usize);
                    if let (Some(a), Some(b)) = (est.get(x, y), gt.get(x, y)) {
                        let wt = k[(dy + r) as usize][(dx + r) as usize];
                        samples.push((wt, a as f64, b as f64));
                    }
                }
            }
            let ws: f64 = samples.iter().map(|s| s.0).sum();
            let mx = samples.iter().map(|s| s.0 * s.1).sum::<f64>() / ws;
            let my = samples.iter().map(|s| s.0 * s.2).sum::<f64>() / ws;
            let vx = samples.iter().map(|s| s.0 * (s.1 - mx).powi(2)).sum::<f64>() / ws;
            let vy = samples.iter().map(|s| s.0 * (s.2 - my).powi(2)).sum::<f64>() / ws;
            let cxy = samples.iter().map(|s| s.0 * (s.1 - mx) * (s.2 - my)).sum::<f64>() / ws;
            let s = ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            total.add(s);
            centres += 1;
        }
    }
    total.value() / centres as f64
}
