#![allow(dead_code)]

pub mod metrics_oracle;

use cyclostereo::fill::{DisparityMap, MapSource};
use cyclostereo::raster::Raster;
use metrics_oracle::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn to_grid(m: &DisparityMap) -> Grid {
    (0..m.height())
        .map(|y| (0..m.width()).map(|x| m.get(x, y).map(|v| v as f64)).collect())
        .collect()
}

/// Random map pair with about 15% invalid cells in each.
pub fn random_pair(seed: u64, w: usize, h: usize) -> (DisparityMap, DisparityMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map = |rng: &mut ChaCha8Rng| {
        let values = Raster::from_fn(w, h, |_, _| rng.random_range(0.0f32..40.0));
        let valid = Raster::from_fn(w, h, |_, _| rng.random::<f64>() > 0.15);
        (values, valid)
    };
    let (gv, gm) = map(&mut rng);
    let (mut ev, em) = map(&mut rng);
    // keep the estimate correlated with the truth
    for (e, g) in ev.as_mut_slice().iter_mut().zip(gv.as_slice()) {
        *e = (0.7 * *g + 0.3 * *e).round();
    }
    (
        DisparityMap::new(ev, em, MapSource::Dp).unwrap(),
        DisparityMap::new(gv, gm, MapSource::Gt).unwrap(),
    )
}
