//! Portable float map, grayscale (`Pf`) variant.
//!
//! Header: `Pf`, then width and height, then a scale whose sign gives the
//! byte order (negative = little-endian), each separated by whitespace and
//! followed by exactly one whitespace byte before the payload. Rows are
//! stored bottom-up. Non-finite samples mark invalid pixels.

use super::{DatasetError, Result};
use crate::disparity::DisparityMap;

fn err(msg: impl Into<String>) -> DatasetError {
    DatasetError::Pfm(msg.into())
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn token(&mut self) -> Result<&'a str> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(err("truncated header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| err("header is not ASCII"))
    }
}

pub fn read_pfm(bytes: &[u8]) -> Result<DisparityMap> {
    let mut hdr = Header { bytes, pos: 0 };
    match hdr.token()? {
        "Pf" => {}
        "PF" => return Err(err("colour PFM (PF) is not a disparity map")),
        other => return Err(err(format!("bad magic {other:?}"))),
    }
    let width: usize = hdr.token()?.parse().map_err(|_| err("bad width"))?;
    let height: usize = hdr.token()?.parse().map_err(|_| err("bad height"))?;
    let scale: f32 = hdr.token()?.parse().map_err(|_| err("bad scale"))?;
    if width == 0 || height == 0 {
        return Err(err("zero dimensions"));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(err("scale must be finite and non-zero"));
    }
    // exactly one whitespace byte terminates the header
    if hdr.pos >= bytes.len() || !bytes[hdr.pos].is_ascii_whitespace() {
        return Err(err("truncated header"));
    }
    let payload = &bytes[hdr.pos + 1..];
    let n = width
        .checked_mul(height)
        .ok_or_else(|| err("dimensions overflow"))?;
    if payload.len() < n * 4 {
        return Err(err(format!(
            "truncated payload: need {} bytes, have {}",
            n * 4,
            payload.len()
        )));
    }
    let little = scale < 0.0;
    let mut data = vec![0.0f32; n];
    let mut valid = vec![false; n];
    for (i, chunk) in payload[..n * 4].chunks_exact(4).enumerate() {
        let b: [u8; 4] = chunk.try_into().unwrap();
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let file_row = i / width;
        let x = i % width;
        let y = height - 1 - file_row;
        if v.is_finite() {
            data[y * width + x] = v;
            valid[y * width + x] = true;
        }
    }
    Ok(DisparityMap::with_mask(width, height, data, valid))
}

/// Little-endian `Pf`; invalid pixels are written as `+inf`.
pub fn write_pfm(map: &DisparityMap) -> Vec<u8> {
    let (w, h) = map.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            let v = if map.is_valid(x, y) {
                map.get(x, y)
            } else {
                f32::INFINITY
            };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}
