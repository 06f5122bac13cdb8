//! PNG and binary PPM (P6) input, PNG output.

use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::error::Result;
use crate::types::ImageRaster;

pub fn load_image(path: &Path) -> Result<ImageRaster> {
    let rgb = image::open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    ImageRaster::new(w as usize, h as usize, rgb.into_raw())
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageRaster> {
    let rgb = image::load_from_memory(bytes)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    ImageRaster::new(w as usize, h as usize, rgb.into_raw())
}

fn to_rgb(img: &ImageRaster) -> RgbImage {
    RgbImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .expect("raster buffer length is validated on construction")
}

pub fn encode_png(img: &ImageRaster) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    to_rgb(img).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn save_png(path: &Path, img: &ImageRaster) -> Result<()> {
    std::fs::write(path, encode_png(img)?)?;
    Ok(())
}
