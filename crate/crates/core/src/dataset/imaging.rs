use std::io::Cursor;

use image::{imageops::FilterType, ImageFormat};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot decode image: {0}")]
    Decode(#[from] image::ImageError),
    #[error("unsupported image format (expected JPEG or PNG)")]
    UnsupportedFormat,
}

/// MIME type of a JPEG or PNG payload, sniffed from its magic bytes.
pub fn image_mime(bytes: &[u8]) -> Result<&'static str, ImageError> {
    match image::guess_format(bytes) {
        Ok(ImageFormat::Jpeg) => Ok("image/jpeg"),
        Ok(ImageFormat::Png) => Ok("image/png"),
        _ => Err(ImageError::UnsupportedFormat),
    }
}

fn scaled(short: u32, long: u32, target: u32) -> u32 {
    // round half up
    ((u64::from(short) * u64::from(target) * 2 + u64::from(long)) / (2 * u64::from(long))).max(1) as u32
}

/// Downscales so the long side equals `target_long_side`, keeping the
/// aspect ratio and the source encoding. Images already within the target
/// are returned unchanged.
pub fn resize_image(bytes: &[u8], target_long_side: u32) -> Result<Vec<u8>, ImageError> {
    let format = image::guess_format(bytes)?;
    let img = image::load_from_memory_with_format(bytes, format)?;
    let (w, h) = (img.width(), img.height());
    if w.max(h) <= target_long_side {
        return Ok(bytes.to_vec());
    }
    let (nw, nh) = if w >= h {
        (target_long_side, scaled(h, w, target_long_side))
    } else {
        (scaled(w, h, target_long_side), target_long_side)
    };
    let resized = img.resize_exact(nw, nh, FilterType::Triangle);
    let mut out = Cursor::new(Vec::new());
    resized.write_to(&mut out, format)?;
    Ok(out.into_inner())
}
