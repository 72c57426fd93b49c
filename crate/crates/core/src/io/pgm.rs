//! 8-bit binary PGM (P5) rasters and 0/255 mask images.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};

pub fn write_pgm(img: &Raster<u8>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let encoder = PnmEncoder::new(BufWriter::new(file)).with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    encoder.write_image(
        img.as_slice(),
        img.width() as u32,
        img.height() as u32,
        ExtendedColorType::L8,
    )?;
    Ok(())
}

/// Reads any 8-bit grayscale PNM/PNG file.
pub fn read_pgm(path: &Path) -> Result<Raster<u8>> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let decoded = reader.with_guessed_format().map_err(|e| Error::io(path, e))?.decode()?;
    let luma = match decoded {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::parse(
                path,
                format!("expected 8-bit grayscale, found {:?}", other.color()),
            ))
        }
    };
    let (w, h) = luma.dimensions();
    Raster::from_vec(w as usize, h as usize, luma.into_raw())
}

pub fn write_mask(mask: &Mask, path: &Path) -> Result<()> {
    write_pgm(&mask.map(|&m| if m { 255 } else { 0 }), path)
}

/// Nonzero pixels are set.
pub fn read_mask(path: &Path) -> Result<Mask> {
    Ok(read_pgm(path)?.map(|&v| v != 0))
}
