//! Disparity visualisation with a fixed seven-anchor ramp.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};

use crate::disparity::DisparityMap;

/// Ramp anchors from zero disparity (far) to the per-image maximum (near),
/// evenly spaced.
pub const ANCHORS: [[u8; 3]; 7] = [
    [48, 18, 59],
    [70, 107, 227],
    [27, 208, 213],
    [98, 252, 108],
    [210, 233, 53],
    [254, 155, 45],
    [122, 4, 3],
];

/// Colour for `t` in `[0, 1]`, linear between neighbouring anchors.
pub fn ramp(t: f32) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (ANCHORS.len() - 1) as f32;
    let i = (pos.floor() as usize).min(ANCHORS.len() - 2);
    let f = pos - i as f32;
    let (a, b) = (ANCHORS[i], ANCHORS[i + 1]);
    std::array::from_fn(|c| (a[c] as f32 + (b[c] as f32 - a[c] as f32) * f).round() as u8)
}

/// Scales `[0, max valid disparity]` onto the ramp; invalid pixels are
/// black. A map whose maximum is not positive renders at the first anchor.
pub fn colorize(map: &DisparityMap) -> RgbImage {
    let max = map.stats().map(|(_, hi, _)| hi).unwrap_or(0.0);
    let (w, h) = map.dims();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        if !map.is_valid(x, y) {
            return Rgb([0, 0, 0]);
        }
        let t = if max > 0.0 { map.get(x, y) / max } else { 0.0 };
        Rgb(ramp(t))
    })
}

pub fn colorize_png(map: &DisparityMap) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    colorize(map)
        .write_to(&mut out, ImageFormat::Png)
        .expect("PNG encoding to memory");
    out.into_inner()
}
