pub mod calib;
pub mod pfm;
pub mod pgm;

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::GrayImage;

pub use calib::{read_calib, write_calib};
pub use pfm::{read_pfm, write_pfm, PfmImage};
pub use pgm::{read_mask, read_pgm, write_mask, write_pgm};

/// Loads a PNG or PNM image as intensities in [0, 1]. Color input is
/// reduced with Rec. 601 luma weights.
pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let img = reader.with_guessed_format().map_err(|e| Error::io(path, e))?.decode()?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        image::DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        image::DynamicImage::ImageLuma16(g) => g.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
        other => other
            .to_rgb32f()
            .pixels()
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect(),
    };
    GrayImage::from_vec(w, h, data)
}

/// Quantizes [0, 1] intensities to 8 bits.
pub fn to_u8(img: &GrayImage) -> crate::raster::Raster<u8> {
    img.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}
