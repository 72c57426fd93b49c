//! Straightforward reference implementation of the disparity metrics,
//! written against plain grids so it shares no code with the library.

pub type Grid = Vec<Vec<Option<f64>>>;

pub struct Reference {
    pub avg: f64,
    pub bad: f64,
    pub rms: f64,
    pub ssim_error: Option<f64>,
    pub psnr: Option<f64>,
    pub mi: f64,
    pub count: usize,
}

fn joint(est: &Grid, gt: &Grid) -> Vec<(usize, usize, f64, f64)> {
    let mut out = Vec::new();
    for y in 0..gt.len() {
        for x in 0..gt[y].len() {
            if let (Some(e), Some(g)) = (est[y][x], gt[y][x]) {
                out.push((x, y, e, g));
            }
        }
    }
    out
}

fn entropy(counts: &[f64], n: f64) -> f64 {
    let mut h = 0.0;
    for &c in counts {
        if c > 0.0 {
            let p = c / n;
            h -= p * p.ln();
        }
    }
    h
}

pub fn reference(est: &Grid, gt: &Grid, tau: f64) -> Reference {
    let cells = joint(est, gt);
    let n = cells.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut bad = 0.0;
    for &(_, _, e, g) in &cells {
        abs += (e - g).abs();
        sq += (e - g) * (e - g);
        if (e - g).abs() > tau {
            bad += 1.0;
        }
    }
    let gmin = cells.iter().map(|c| c.3).fold(f64::INFINITY, f64::min);
    let gmax = cells.iter().map(|c| c.3).fold(f64::NEG_INFINITY, f64::max);
    let range = gmax - gmin;
    let mse = sq / n;
    let psnr = if range > 0.0 {
        Some(if mse == 0.0 { f64::INFINITY } else { 20.0 * range.log10() - 10.0 * mse.log10() })
    } else {
        None
    };

    let ssim_error = if range > 0.0 {
        let c1 = (0.01 * range) * (0.01 * range);
        let c2 = (0.03 * range) * (0.03 * range);
        let mut acc = 0.0;
        for &(cx, cy, _, _) in &cells {
            let (mut sw, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for &(x, y, e, g) in &cells {
                let dx = x as f64 - cx as f64;
                let dy = y as f64 - cy as f64;
                if dx.abs() > 3.0 || dy.abs() > 3.0 {
                    continue;
                }
                let w = (-(dx * dx + dy * dy) / 4.5).exp();
                sw += w;
                sx += w * e;
                sy += w * g;
                sxx += w * e * e;
                syy += w * g * g;
                sxy += w * e * g;
            }
            let (mx, my) = (sx / sw, sy / sw);
            let vx = sxx / sw - mx * mx;
            let vy = syy / sw - my * my;
            let cov = sxy / sw - mx * my;
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
        Some((1.0 - acc / n).clamp(0.0, 1.0))
    } else {
        None
    };

    let lo = cells.iter().map(|c| c.2.min(c.3)).fold(f64::INFINITY, f64::min);
    let hi = cells.iter().map(|c| c.2.max(c.3)).fold(f64::NEG_INFINITY, f64::max);
    let bins = 64usize;
    let bin = |v: f64| -> usize {
        if hi == lo {
            return 0;
        }
        let b = ((v - lo) / (hi - lo) * bins as f64).floor() as usize;
        if b >= bins {
            bins - 1
        } else {
            b
        }
    };
    let mut hx = vec![0.0; bins];
    let mut hy = vec![0.0; bins];
    let mut hxy = vec![0.0; bins * bins];
    for &(_, _, e, g) in &cells {
        hx[bin(e)] += 1.0;
        hy[bin(g)] += 1.0;
        hxy[bin(e) * bins + bin(g)] += 1.0;
    }
    let mi = entropy(&hx, n) + entropy(&hy, n) - entropy(&hxy, n);

    Reference {
        avg: abs / n,
        bad: bad / n,
        rms: mse.sqrt(),
        ssim_error,
        psnr,
        mi,
        count: cells.len(),
    }
}
