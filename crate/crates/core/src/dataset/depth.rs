//! Metric depth maps and the pinhole depth/disparity conversion.

use super::{DatasetError, Result};
use crate::disparity::DisparityMap;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    /// Metres; `<= 0` or non-finite means unknown.
    pub data: Vec<f32>,
}

/// `d = fx * baseline / z`. Pixels with `z <= 0` or non-finite `z` are
/// invalid.
pub fn depth_to_disparity(depth: &DepthMap, fx: f32, baseline: f32) -> Result<DisparityMap> {
    if !(fx > 0.0 && fx.is_finite()) {
        return Err(DatasetError::InvalidArgument(format!("focal length must be positive, got {fx}")));
    }
    if !(baseline > 0.0 && baseline.is_finite()) {
        return Err(DatasetError::InvalidArgument(format!("baseline must be positive, got {baseline}")));
    }
    let fb = fx * baseline;
    let mut data = Vec::with_capacity(depth.data.len());
    let mut valid = Vec::with_capacity(depth.data.len());
    for &z in &depth.data {
        let ok = z.is_finite() && z > 0.0;
        data.push(if ok { fb / z } else { 0.0 });
        valid.push(ok);
    }
    Ok(DisparityMap::with_mask(depth.width, depth.height, data, valid))
}

/// `z = fx * baseline / d`; zero, negative or invalid disparity gives an
/// unknown depth (0).
pub fn disparity_to_depth(disp: &DisparityMap, fx: f32, baseline: f32) -> Result<DepthMap> {
    if !(fx > 0.0 && baseline > 0.0) {
        return Err(DatasetError::InvalidArgument("focal length and baseline must be positive".into()));
    }
    let fb = fx * baseline;
    let data = disp
        .data()
        .iter()
        .zip(disp.mask())
        .map(|(&d, &ok)| if ok && d > 0.0 { fb / d } else { 0.0 })
        .collect();
    Ok(DepthMap {
        width: disp.width(),
        height: disp.height(),
        data,
    })
}

fn npy_err(msg: impl Into<String>) -> DatasetError {
    DatasetError::Npy(msg.into())
}

/// Reads a 2-D little-endian `float32` `.npy` array in C order (the
/// TartanAir depth format).
pub fn read_npy_f32(bytes: &[u8]) -> Result<DepthMap> {
    if bytes.len() < 10 || &bytes[..6] != b"\x93NUMPY" {
        return Err(npy_err("bad magic"));
    }
    let major = bytes[6];
    let (hlen, start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(npy_err("truncated header"));
            }
            (u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize, 12)
        }
        v => return Err(npy_err(format!("unsupported version {v}"))),
    };
    let end = start + hlen;
    if end > bytes.len() {
        return Err(npy_err("truncated header"));
    }
    let header = std::str::from_utf8(&bytes[start..end]).map_err(|_| npy_err("header is not UTF-8"))?;
    let field = |key: &str| -> Option<&str> {
        let i = header.find(&format!("'{key}'"))?;
        let rest = header[i + key.len() + 2..].trim_start();
        rest.strip_prefix(':').map(str::trim_start)
    };
    let descr = field("descr").ok_or_else(|| npy_err("missing descr"))?;
    if !(descr.starts_with("'<f4'") || descr.starts_with("'float32'")) {
        return Err(npy_err(format!("unsupported dtype {}", descr.split(',').next().unwrap_or(""))));
    }
    if field("fortran_order").is_some_and(|v| v.starts_with("True")) {
        return Err(npy_err("fortran order not supported"));
    }
    let shape = field("shape").ok_or_else(|| npy_err("missing shape"))?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| npy_err("bad shape"))?;
    let dims: Vec<usize> = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| npy_err("bad shape")))
        .collect::<Result<_>>()?;
    let (height, width) = match dims[..] {
        [h, w] => (h, w),
        [h, w, 1] => (h, w),
        _ => return Err(npy_err(format!("expected a 2-D array, got shape {dims:?}"))),
    };
    let payload = &bytes[end..];
    if payload.len() < width * height * 4 {
        return Err(npy_err("truncated payload"));
    }
    let data = payload[..width * height * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DepthMap { width, height, data })
}

pub fn write_npy_f32(depth: &DepthMap) -> Vec<u8> {
    let mut header = format!(
        "{{'descr': '<f4', 'fortran_order': False, 'shape': ({}, {}), }}",
        depth.height, depth.width
    );
    // pad so the payload starts on a 64-byte boundary
    let total = 10 + header.len() + 1;
    header.push_str(&" ".repeat((64 - total % 64) % 64));
    header.push('\n');
    let mut out = b"\x93NUMPY\x01\x00".to_vec();
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in &depth.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// 16-bit depth PNG with `z = stored * metres_per_unit` (Falling Things
/// stores 0.1 mm units); stored 0 is unknown.
pub fn read_png16_depth(bytes: &[u8], metres_per_unit: f32) -> Result<DepthMap> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| DatasetError::Png(e.to_string()))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(i) => i,
        other => {
            return Err(DatasetError::Png(format!(
                "expected 16-bit single-channel depth PNG, got {:?}",
                other.color()
            )))
        }
    };
    let (width, height) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|v| v as f32 * metres_per_unit).collect();
    Ok(DepthMap { width, height, data })
}
