use std::io::Cursor;
use std::path::Path;

use image::{imageops::FilterType, ImageFormat, RgbImage};

use crate::error::{io_err, Error, Result};

/// Decodes any supported image to `(width, height, rgb8)`.
pub fn decode_rgb(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::load_from_memory(bytes)
        .map_err(|e| Error::Image(e.to_string()))?
        .to_rgb8();
    Ok((img.width() as usize, img.height() as usize, img.into_raw()))
}

/// Decodes, center-crops to a square and resizes to `size x size`.
pub fn decode_square(bytes: &[u8], size: usize) -> Result<Vec<u8>> {
    let img = image::load_from_memory(bytes)
        .map_err(|e| Error::Image(e.to_string()))?
        .to_rgb8();
    let side = img.width().min(img.height());
    if side == 0 {
        return Err(Error::Image("image has no pixels".into()));
    }
    let x = (img.width() - side) / 2;
    let y = (img.height() - side) / 2;
    let cropped = image::imageops::crop_imm(&img, x, y, side, side).to_image();
    let out = if side as usize == size {
        cropped
    } else {
        image::imageops::resize(&cropped, size as u32, size as u32, FilterType::Triangle)
    };
    Ok(out.into_raw())
}

pub fn encode_png(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    let img = RgbImage::from_raw(width as u32, height as u32, rgb.to_vec())
        .ok_or_else(|| Error::Image(format!("buffer does not hold {width}x{height} RGB pixels")))?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn write_png(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    let bytes = encode_png(width, height, rgb)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}
