//! Coordinate algebra between the left/right pixel systems and the
//! cyclopean (x, d) system of an epipolar line.
//!
//! All half-grid quantities are carried as integer twice-values so that the
//! transform and its inverse are exact. The disparity sign convention is
//! `d = (l - r) / 2`, which is non-negative for rectified pairs where right
//! image content is shifted leftward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A value on the half-pixel grid, stored as twice its real value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Half(i64);

impl Half {
    pub const ZERO: Half = Half(0);

    #[inline]
    pub const fn from_twice(twice: i64) -> Self {
        Half(twice)
    }

    /// Whole-pixel value.
    #[inline]
    pub const fn from_int(v: i64) -> Self {
        Half(2 * v)
    }

    /// Converts a real value that must be an exact multiple of 1/2.
    pub fn try_from_f64(v: f64) -> Result<Self> {
        let t = v * 2.0;
        if !t.is_finite() || t.fract() != 0.0 || t.abs() > (1u64 << 52) as f64 {
            return Err(Error::Domain(format!("{v} is not on the half-pixel grid")));
        }
        Ok(Half(t as i64))
    }

    #[inline]
    pub const fn twice(self) -> i64 {
        self.0
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.0 as f64 * 0.5
    }

    #[inline]
    pub const fn is_integral(self) -> bool {
        self.0 % 2 == 0
    }
}

impl std::fmt::Display for Half {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            let sign = if self.0 < 0 { "-" } else { "" };
            write!(f, "{sign}{}.5", self.0.unsigned_abs() / 2)
        }
    }
}

/// Calibration and XD-grid parameters for a rectified pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpipolarGeometry {
    pub focal_length_px: f64,
    pub baseline: f64,
    pub width: usize,
    pub height: usize,
    /// Cyclopean disparity cap; the full-pixel cap is twice this.
    pub max_disparity_c: u32,
    #[serde(default)]
    pub disparity_offset: f64,
}

impl EpipolarGeometry {
    pub fn new(
        focal_length_px: f64,
        baseline: f64,
        width: usize,
        height: usize,
        max_disparity_c: u32,
        disparity_offset: f64,
    ) -> Result<Self> {
        let g = Self {
            focal_length_px,
            baseline,
            width,
            height,
            max_disparity_c,
            disparity_offset,
        };
        g.validate()?;
        Ok(g)
    }

    /// Unit calibration, useful when only disparities matter.
    pub fn unit(width: usize, height: usize, max_disparity_c: u32) -> Result<Self> {
        Self::new(1.0, 1.0, width, height, max_disparity_c, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length_px.is_finite() && self.focal_length_px > 0.0) {
            return Err(Error::Domain("focal length must be positive".into()));
        }
        if !(self.baseline.is_finite() && self.baseline > 0.0) {
            return Err(Error::Domain("baseline must be positive".into()));
        }
        if self.width < 2 {
            return Err(Error::Domain("width must be at least 2".into()));
        }
        if self.height < 1 {
            return Err(Error::Domain("height must be at least 1".into()));
        }
        if !self.disparity_offset.is_finite() {
            return Err(Error::Domain("disparity offset must be finite".into()));
        }
        // 0 < d_max <= (N - 1) / 2, compared on twice-values
        if self.max_disparity_c == 0 || 2 * self.max_disparity_c as usize > self.width - 1 {
            return Err(Error::Domain(format!(
                "max cyclopean disparity {} outside (0, {}]",
                self.max_disparity_c,
                (self.width - 1) as f64 / 2.0
            )));
        }
        Ok(())
    }

    /// Number of x samples on the half grid (2N).
    #[inline]
    pub fn nx(&self) -> usize {
        2 * self.width
    }

    /// Number of disparity levels on the half grid (0..=2·d_max).
    #[inline]
    pub fn nd(&self) -> usize {
        2 * self.max_disparity_c as usize + 1
    }
}

/// A point of the cyclopean grid on line `e`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CyclopeanCoord {
    pub e: usize,
    pub x: Half,
    pub d: Half,
}

impl CyclopeanCoord {
    pub fn new(e: usize, x: Half, d: Half, width: usize) -> Result<Self> {
        if d.twice() < 0 {
            return Err(Error::Domain(format!("negative disparity {d}")));
        }
        if x.twice() < 0 || x.twice() >= 2 * width as i64 {
            return Err(Error::Domain(format!("x = {x} outside [0, {width})")));
        }
        Ok(Self { e, x, d })
    }

    pub fn to_lr(&self, width: usize) -> Result<(Half, Half)> {
        cyclopean_to_lr(self.x, self.d, width)
    }
}

fn check_pixel(name: &str, v: Half, width: usize) -> Result<()> {
    let max = 2 * (width as i64 - 1);
    if v.twice() < 0 || v.twice() > max {
        return Err(Error::Domain(format!(
            "{name} = {v} outside [0, {}]",
            width as i64 - 1
        )));
    }
    Ok(())
}

/// `(l, r) -> (x, d)` with `x = (l + r) / 2`, `d = (l - r) / 2`.
pub fn lr_to_cyclopean(l: Half, r: Half, width: usize) -> Result<(Half, Half)> {
    check_pixel("l", l, width)?;
    check_pixel("r", r, width)?;
    let sum = l.twice() + r.twice();
    if sum % 2 != 0 {
        return Err(Error::Domain(format!(
            "(l, r) = ({l}, {r}) does not land on the half grid"
        )));
    }
    Ok((
        Half::from_twice(sum / 2),
        Half::from_twice((l.twice() - r.twice()) / 2),
    ))
}

/// `(x, d) -> (l, r)` with `l = x + d`, `r = x - d`.
pub fn cyclopean_to_lr(x: Half, d: Half, width: usize) -> Result<(Half, Half)> {
    let l = Half::from_twice(x.twice() + d.twice());
    let r = Half::from_twice(x.twice() - d.twice());
    check_pixel("l", l, width)?;
    check_pixel("r", r, width)?;
    Ok((l, r))
}

/// Depth seen from the cyclopean eye: `f·B / (2d + doffs)`.
pub fn cyclopean_depth(d: f64, geom: &EpipolarGeometry) -> Result<f64> {
    let denom = 2.0 * d + geom.disparity_offset;
    if !(denom > 0.0) {
        return Err(Error::Domain(format!(
            "disparity at or beyond infinity (2d + doffs = {denom})"
        )));
    }
    Ok(geom.focal_length_px * geom.baseline / denom)
}

/// Left and right eye distances to a point at cyclopean depth `depth_c`,
/// offset laterally (world units) from the cyclopean axis.
pub fn lr_depth_bias(depth_c: f64, lateral_offset: f64, baseline: f64) -> Result<(f64, f64)> {
    if !(depth_c > 0.0 && depth_c.is_finite()) {
        return Err(Error::Domain(format!("cyclopean depth {depth_c} must be > 0")));
    }
    if !lateral_offset.is_finite() || !baseline.is_finite() {
        return Err(Error::Domain("non-finite offset or baseline".into()));
    }
    let half = baseline / 2.0;
    let left = depth_c.hypot(half - lateral_offset);
    let right = depth_c.hypot(half + lateral_offset);
    Ok((left, right))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> Half {
        Half::try_from_f64(v).unwrap()
    }

    #[test]
    fn transform_examples() {
        assert_eq!(lr_to_cyclopean(h(6.0), h(4.0), 8).unwrap(), (h(5.0), h(1.0)));
        assert_eq!(lr_to_cyclopean(h(3.0), h(3.0), 8).unwrap(), (h(3.0), h(0.0)));
        assert_eq!(lr_to_cyclopean(h(4.0), h(3.0), 8).unwrap(), (h(3.5), h(0.5)));
        assert_eq!(cyclopean_to_lr(h(5.0), h(1.0), 8).unwrap(), (h(6.0), h(4.0)));
        assert_eq!(cyclopean_to_lr(h(0.0), h(0.0), 8).unwrap(), (h(0.0), h(0.0)));
        assert_eq!(cyclopean_to_lr(h(3.5), h(0.5), 8).unwrap(), (h(4.0), h(3.0)));
    }

    #[test]
    fn out_of_range_names_coordinate() {
        let err = lr_to_cyclopean(h(8.0), h(1.0), 8).unwrap_err().to_string();
        assert!(err.contains("l = 8"), "{err}");
        let err = lr_to_cyclopean(h(1.0), h(-1.0), 8).unwrap_err().to_string();
        assert!(err.contains("r = -1"), "{err}");
        let err = cyclopean_to_lr(h(0.5), h(1.0), 8).unwrap_err().to_string();
        assert!(err.contains("r = -0.5"), "{err}");
        assert!(Half::try_from_f64(0.3).is_err());
    }

    #[test]
    fn depth_examples() {
        let unit = EpipolarGeometry::unit(8, 1, 2).unwrap();
        assert_eq!(cyclopean_depth(0.5, &unit).unwrap(), 1.0);
        let g = EpipolarGeometry::new(100.0, 0.5, 8, 1, 2, 0.0).unwrap();
        assert_eq!(cyclopean_depth(1.0, &g).unwrap(), 25.0);
        assert!(matches!(cyclopean_depth(0.0, &unit), Err(Error::Domain(_))));
    }

    #[test]
    fn depth_bias_examples() {
        assert_eq!(lr_depth_bias(1.0, 0.0, 0.0).unwrap(), (1.0, 1.0));
        assert_eq!(lr_depth_bias(3.0, 2.0, 4.0).unwrap(), (3.0, 5.0));
        let (l, r) = lr_depth_bias(1.0, 0.0, 2.0).unwrap();
        assert!((l - 2f64.sqrt()).abs() < 1e-15 && (r - 2f64.sqrt()).abs() < 1e-15);
        assert!(lr_depth_bias(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn geometry_invariants() {
        assert!(EpipolarGeometry::unit(8, 1, 3).is_ok());
        assert!(EpipolarGeometry::unit(8, 1, 4).is_err());
        assert!(EpipolarGeometry::unit(8, 1, 0).is_err());
        assert!(EpipolarGeometry::unit(1, 1, 1).is_err());
        assert!(EpipolarGeometry::new(0.0, 1.0, 8, 1, 1, 0.0).is_err());
        let g = EpipolarGeometry::unit(64, 2, 8).unwrap();
        assert_eq!((g.nx(), g.nd()), (128, 17));
    }

    #[test]
    fn depth_decreasing_in_disparity() {
        let g = EpipolarGeometry::new(50.0, 0.2, 64, 1, 20, 3.5).unwrap();
        let mut prev = f64::INFINITY;
        for d2 in 0..=40 {
            let z = cyclopean_depth(d2 as f64 / 2.0, &g).unwrap();
            assert!(z < prev);
            prev = z;
        }
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bias_symmetry_and_dominance(z in 1e-3f64..1e3, off in -50f64..50.0, b in 0f64..20.0) {
            let (l, r) = lr_depth_bias(z, off, b).unwrap();
            let (l2, r2) = lr_depth_bias(z, -off, b).unwrap();
            prop_assert!(l >= z && r >= z);
            prop_assert_eq!(l, r2);
            prop_assert_eq!(r, l2);
        }

        #[test]
        fn round_trip(width in 2usize..40, x2 in 0i64..80, d2 in 0i64..40) {
            prop_assume!(x2 < 2 * width as i64);
            let x = Half::from_twice(x2);
            let d = Half::from_twice(d2);
            if let Ok((l, r)) = cyclopean_to_lr(x, d, width) {
                prop_assert_eq!(lr_to_cyclopean(l, r, width).unwrap(), (x, d));
            }
        }
    }
}
