//! 16-bit PNG disparity (KITTI, InStereo2K), Sintel RGB packing and KITTI
//! object maps.

use std::io::Cursor;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, RgbImage};

use super::{DatasetError, Result};
use crate::disparity::DisparityMap;
use crate::eval::RegionMask;

pub const KITTI_SCALE: f32 = 256.0;
pub const INSTEREO2K_SCALE: f32 = 100.0;

fn decode_png(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| DatasetError::Png(e.to_string()))
}

/// Single-channel 16-bit PNG; `disparity = stored / divisor`, stored 0 is
/// invalid.
pub fn read_png16_disparity(bytes: &[u8], divisor: f32) -> Result<DisparityMap> {
    let img = match decode_png(bytes)? {
        DynamicImage::ImageLuma16(i) => i,
        other => {
            return Err(DatasetError::Png(format!(
                "expected 16-bit single-channel PNG, got {:?}",
                other.color()
            )))
        }
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.into_raw();
    let data = raw
        .iter()
        .map(|&v| if v == 0 { 0.0 } else { v as f32 / divisor })
        .collect();
    let valid = raw.iter().map(|&v| v != 0).collect();
    Ok(DisparityMap::with_mask(w, h, data, valid))
}

/// Inverse of [`read_png16_disparity`]. Valid pixels are rounded to the
/// nearest step and clamped to `1..=65535` so they never collide with the
/// invalid code.
pub fn write_png16_disparity(map: &DisparityMap, divisor: f32) -> Result<Vec<u8>> {
    let (w, h) = map.dims();
    let raw: Vec<u16> = map
        .data()
        .iter()
        .zip(map.mask())
        .map(|(&d, &ok)| {
            if ok {
                (d * divisor).round().clamp(1.0, 65535.0) as u16
            } else {
                0
            }
        })
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer matches dimensions");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| DatasetError::Png(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn read_kitti_disparity(bytes: &[u8]) -> Result<DisparityMap> {
    read_png16_disparity(bytes, KITTI_SCALE)
}

pub fn write_kitti_disparity(map: &DisparityMap) -> Result<Vec<u8>> {
    write_png16_disparity(map, KITTI_SCALE)
}

/// Sintel packing: `d = 4 R + G / 2^6 + B / 2^14`. Every pixel is valid.
pub fn decode_sintel_disparity(img: &RgbImage) -> DisparityMap {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img
        .pixels()
        .map(|p| 4.0 * p[0] as f32 + p[1] as f32 / 64.0 + p[2] as f32 / 16384.0)
        .collect();
    DisparityMap::from_values(w, h, data)
}

/// Decodes a Sintel disparity PNG, which must be 8-bit RGB.
pub fn read_sintel_disparity(bytes: &[u8]) -> Result<DisparityMap> {
    match decode_png(bytes)? {
        DynamicImage::ImageRgb8(i) => Ok(decode_sintel_disparity(&i)),
        other => Err(DatasetError::Png(format!(
            "expected 8-bit RGB Sintel disparity, got {:?}",
            other.color()
        ))),
    }
}

/// KITTI object map: any non-zero pixel is foreground.
pub fn read_object_map(bytes: &[u8]) -> Result<RegionMask> {
    let img = decode_png(bytes)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let fg = img.into_raw().into_iter().map(|v| v > 0).collect();
    Ok(RegionMask::new(w, h, fg))
}

pub fn write_object_map(mask: &RegionMask) -> Result<Vec<u8>> {
    let raw: Vec<u8> = mask.foreground().iter().map(|&f| if f { 1 } else { 0 }).collect();
    let img: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, raw).expect("buffer matches dimensions");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| DatasetError::Png(e.to_string()))?;
    Ok(out.into_inner())
}
