//! Training-time sample transforms.
//!
//! [`augment`] applies, in order: photometric jitter, spatial scaling,
//! random crop, then right-view perturbation. Ground truth changes only in
//! the scale step (resampled, multiplied by `s_x`) and the crop (a window of
//! the original values).
//!
//! Defaults follow the RAFT-Stereo reference augmentor; the jitter ranges
//! and erase parameters are adopted from that code rather than specified
//! independently.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::StereoSample;
use crate::disparity::DisparityMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// `[height, width]`.
    pub crop: [usize; 2],
    /// log2 of the isotropic scale range.
    pub scale_log2: [f32; 2],
    /// Probability of applying any spatial scale.
    pub scale_prob: f64,
    pub stretch_prob: f64,
    /// Independent log2 stretch of x and y, drawn from `±max_stretch`.
    pub max_stretch: f32,
    /// Brightness factor drawn from `[1 - b, 1 + b]`.
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: [f32; 2],
    /// Probability of drawing separate colour parameters per eye.
    pub asymmetric_prob: f64,
    /// Right view shifted vertically by up to this many rows.
    pub y_jitter: u32,
    pub erase_prob: f64,
    /// Patch side lengths, inclusive.
    pub erase_size: [u32; 2],
    /// Patches per erased image, inclusive.
    pub erase_count: [u32; 2],
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop: [320, 704],
            scale_log2: [-0.2, 0.4],
            scale_prob: 1.0,
            stretch_prob: 0.8,
            max_stretch: 0.2,
            brightness: 0.4,
            contrast: 0.4,
            saturation: [0.0, 1.4],
            asymmetric_prob: 0.2,
            y_jitter: 2,
            erase_prob: 0.5,
            erase_size: [50, 100],
            erase_count: [1, 2],
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Crop only: every jitter disabled.
    pub fn crop_only(crop: [usize; 2]) -> Self {
        Self {
            crop,
            scale_prob: 0.0,
            stretch_prob: 0.0,
            max_stretch: 0.0,
            scale_log2: [0.0, 0.0],
            brightness: 0.0,
            contrast: 0.0,
            saturation: [1.0, 1.0],
            asymmetric_prob: 0.0,
            y_jitter: 0,
            erase_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(format!("{name} must be in [0, 1], got {p}"))
            }
        };
        if self.crop.contains(&0) {
            return Err("crop dimensions must be positive".into());
        }
        if self.scale_log2[0] > self.scale_log2[1] || !self.scale_log2.iter().all(|v| v.is_finite()) {
            return Err("scale range must satisfy min <= max".into());
        }
        if self.saturation[0] > self.saturation[1] || self.saturation[0] < 0.0 {
            return Err("saturation range must satisfy 0 <= min <= max".into());
        }
        if !(self.brightness >= 0.0 && self.contrast >= 0.0 && self.max_stretch >= 0.0) {
            return Err("jitter magnitudes must be non-negative".into());
        }
        if self.erase_size[0] == 0 || self.erase_size[0] > self.erase_size[1] {
            return Err("erase size range must satisfy 1 <= min <= max".into());
        }
        if self.erase_count[0] > self.erase_count[1] {
            return Err("erase count range must satisfy min <= max".into());
        }
        prob("scale_prob", self.scale_prob)?;
        prob("stretch_prob", self.stretch_prob)?;
        prob("asymmetric_prob", self.asymmetric_prob)?;
        prob("erase_prob", self.erase_prob)
    }
}

/// Seed for one sample, independent of processing order: the first eight
/// bytes (little-endian) of SHA-256 over the global seed's LE bytes followed
/// by the sample id.
pub fn sample_seed(global: u64, sample_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(sample_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

pub fn sample_rng(global: u64, sample_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sample_seed(global, sample_id))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorParams {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
}

impl ColorParams {
    pub const IDENTITY: Self = Self {
        brightness: 1.0,
        contrast: 1.0,
        saturation: 1.0,
    };
}

fn luma(p: [f32; 3]) -> f32 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

/// Brightness, contrast, then saturation, clamping to `[0, 255]` after each
/// and rounding once at the end. Contrast blends towards the mean luma of
/// the whole image, saturation towards the per-pixel luma.
pub fn apply_color(img: &RgbImage, p: ColorParams) -> RgbImage {
    let mut px: Vec<[f32; 3]> = img
        .pixels()
        .map(|q| q.0.map(|v| (v as f32 * p.brightness).clamp(0.0, 255.0)))
        .collect();
    let mean = if px.is_empty() {
        0.0
    } else {
        (px.iter().map(|&q| luma(q) as f64).sum::<f64>() / px.len() as f64) as f32
    };
    for q in &mut px {
        *q = q.map(|v| (p.contrast * v + (1.0 - p.contrast) * mean).clamp(0.0, 255.0));
        let g = luma(*q);
        *q = q.map(|v| (p.saturation * v + (1.0 - p.saturation) * g).clamp(0.0, 255.0));
    }
    let mut out = RgbImage::new(img.width(), img.height());
    for (o, q) in out.pixels_mut().zip(px) {
        *o = Rgb(q.map(|v| v.round() as u8));
    }
    out
}

fn uniform(rng: &mut impl Rng, lo: f32, hi: f32) -> f32 {
    if lo >= hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn draw_color(cfg: &AugmentConfig, rng: &mut impl Rng) -> ColorParams {
    ColorParams {
        brightness: uniform(rng, (1.0 - cfg.brightness).max(0.0), 1.0 + cfg.brightness),
        contrast: uniform(rng, (1.0 - cfg.contrast).max(0.0), 1.0 + cfg.contrast),
        saturation: uniform(rng, cfg.saturation[0], cfg.saturation[1]),
    }
}

/// Colour jitter; the two eyes get separate draws with probability
/// `asymmetric_prob`. Ground truth is not touched.
pub fn photometric_jitter(sample: &StereoSample, cfg: &AugmentConfig, rng: &mut impl Rng) -> StereoSample {
    let asym = rng.random_bool(cfg.asymmetric_prob);
    let pl = draw_color(cfg, rng);
    let pr = if asym { draw_color(cfg, rng) } else { pl };
    StereoSample {
        left: apply_color(&sample.left, pl),
        right: apply_color(&sample.right, pr),
        ..sample.clone()
    }
}

fn scaled_len(n: usize, s: f32) -> usize {
    ((n as f64 * s as f64).round() as usize).max(1)
}

/// Source coordinate for output index `i` under pixel-centre alignment.
fn src_coord(i: usize, n_in: usize, n_out: usize) -> f32 {
    let s = n_in as f64 / n_out as f64;
    (((i as f64 + 0.5) * s - 0.5).clamp(0.0, (n_in - 1) as f64)) as f32
}

fn taps(c: f32, n: usize) -> (usize, usize, f32) {
    let i0 = c.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, c - i0 as f32)
}

fn resize_rgb(img: &RgbImage, w: usize, h: usize) -> RgbImage {
    let (iw, ih) = (img.width() as usize, img.height() as usize);
    if (iw, ih) == (w, h) {
        return img.clone();
    }
    let xs: Vec<_> = (0..w).map(|x| taps(src_coord(x, iw, w), iw)).collect();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (y0, y1, fy) = taps(src_coord(y as usize, ih, h), ih);
        let (x0, x1, fx) = xs[x as usize];
        let p = |xx: usize, yy: usize| img.get_pixel(xx as u32, yy as u32).0;
        let (a, b, c, d) = (p(x0, y0), p(x1, y0), p(x0, y1), p(x1, y1));
        Rgb(std::array::from_fn(|k| {
            let top = a[k] as f32 * (1.0 - fx) + b[k] as f32 * fx;
            let bot = c[k] as f32 * (1.0 - fx) + d[k] as f32 * fx;
            (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8
        }))
    })
}

/// Bilinear over valid neighbours only; validity is taken from the
/// nearest source pixel, which is always one of the four taps.
fn resize_disparity(map: &DisparityMap, w: usize, h: usize, value_scale: f32) -> DisparityMap {
    let (iw, ih) = map.dims();
    let mut data = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for y in 0..h {
        let cy = src_coord(y, ih, h);
        let (y0, y1, fy) = taps(cy, ih);
        for x in 0..w {
            let cx = src_coord(x, iw, w);
            let (x0, x1, fx) = taps(cx, iw);
            let nx = (cx.round() as usize).min(iw - 1);
            let ny = (cy.round() as usize).min(ih - 1);
            if !map.is_valid(nx, ny) {
                data.push(0.0);
                valid.push(false);
                continue;
            }
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for (xx, yy, wgt) in [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x1, y0, fx * (1.0 - fy)),
                (x0, y1, (1.0 - fx) * fy),
                (x1, y1, fx * fy),
            ] {
                if wgt > 0.0 && map.is_valid(xx, yy) {
                    num += wgt as f64 * map.get(xx, yy) as f64;
                    den += wgt as f64;
                }
            }
            let v = if den > 0.0 { num / den } else { map.get(nx, ny) as f64 };
            data.push((v * value_scale as f64) as f32);
            valid.push(true);
        }
    }
    DisparityMap::with_mask(w, h, data, valid)
}

/// Resamples both views to `round(w·s_x) × round(h·s_y)`. Disparity is
/// multiplied by `s_x`.
pub fn spatial_scale(sample: &StereoSample, s_x: f32, s_y: f32) -> StereoSample {
    assert!(s_x > 0.0 && s_y > 0.0, "scale factors must be positive");
    let w = scaled_len(sample.width(), s_x);
    let h = scaled_len(sample.height(), s_y);
    StereoSample {
        left: resize_rgb(&sample.left, w, h),
        right: resize_rgb(&sample.right, w, h),
        gt: sample.gt.as_ref().map(|g| resize_disparity(g, w, h, s_x)),
        ..sample.clone()
    }
}

/// Draws `(s_x, s_y)`: `2^U(scale_log2)`, optionally stretched per axis,
/// with `s_x`/`s_y` raised so the result is at least the crop plus 8 px.
pub fn draw_scale(sample: &StereoSample, cfg: &AugmentConfig, rng: &mut impl Rng) -> Option<(f32, f32)> {
    if !rng.random_bool(cfg.scale_prob) {
        return None;
    }
    let s = uniform(rng, cfg.scale_log2[0], cfg.scale_log2[1]).exp2();
    let (mut sx, mut sy) = (s, s);
    if rng.random_bool(cfg.stretch_prob) {
        sx *= uniform(rng, -cfg.max_stretch, cfg.max_stretch).exp2();
        sy *= uniform(rng, -cfg.max_stretch, cfg.max_stretch).exp2();
    }
    let min_scale = ((cfg.crop[0] + 8) as f32 / sample.height() as f32).max((cfg.crop[1] + 8) as f32 / sample.width() as f32);
    Some((sx.max(min_scale), sy.max(min_scale)))
}

/// Reflection index without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

fn reflect_pad_rgb(img: &RgbImage, top: usize, left: usize, w: usize, h: usize) -> RgbImage {
    let (iw, ih) = (img.width() as usize, img.height() as usize);
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let sx = reflect(x as isize - left as isize, iw);
        let sy = reflect(y as isize - top as isize, ih);
        *img.get_pixel(sx as u32, sy as u32)
    })
}

/// Padded ground truth keeps original values inside and is invalid in the
/// border, where mirrored content has no true correspondence.
fn pad_disparity(map: &DisparityMap, top: usize, left: usize, w: usize, h: usize) -> DisparityMap {
    let mut out = DisparityMap::with_mask(w, h, vec![0.0; w * h], vec![false; w * h]);
    for y in 0..map.height() {
        for x in 0..map.width() {
            out.set(x + left, y + top, map.get(x, y), map.is_valid(x, y));
        }
    }
    out
}

/// Enlarges an undersized sample to at least `[h, w]` by reflection,
/// splitting the padding evenly around the image.
pub fn pad_to_crop(sample: &StereoSample, crop: [usize; 2]) -> StereoSample {
    let (w0, h0) = (sample.width(), sample.height());
    let (w, h) = (w0.max(crop[1]), h0.max(crop[0]));
    if (w, h) == (w0, h0) {
        return sample.clone();
    }
    let (top, left) = ((h - h0) / 2, (w - w0) / 2);
    StereoSample {
        left: reflect_pad_rgb(&sample.left, top, left, w, h),
        right: reflect_pad_rgb(&sample.right, top, left, w, h),
        gt: sample.gt.as_ref().map(|g| pad_disparity(g, top, left, w, h)),
        ..sample.clone()
    }
}

/// Cuts the same window from both views and the ground truth.
pub fn crop_at(sample: &StereoSample, y0: usize, x0: usize, crop: [usize; 2]) -> StereoSample {
    let [ch, cw] = crop;
    let cut = |img: &RgbImage| image::imageops::crop_imm(img, x0 as u32, y0 as u32, cw as u32, ch as u32).to_image();
    let gt = sample.gt.as_ref().map(|g| {
        let mut data = Vec::with_capacity(cw * ch);
        let mut valid = Vec::with_capacity(cw * ch);
        for y in y0..y0 + ch {
            for x in x0..x0 + cw {
                data.push(g.get(x, y));
                valid.push(g.is_valid(x, y));
            }
        }
        DisparityMap::with_mask(cw, ch, data, valid)
    });
    StereoSample {
        left: cut(&sample.left),
        right: cut(&sample.right),
        gt,
        ..sample.clone()
    }
}

/// Valid window offsets `(max_row, max_col)` for a crop of an image of the
/// given size, after padding.
pub fn crop_offset_range(height: usize, width: usize, crop: [usize; 2]) -> (usize, usize) {
    (height.saturating_sub(crop[0]), width.saturating_sub(crop[1]))
}

pub fn random_crop(sample: &StereoSample, cfg: &AugmentConfig, rng: &mut impl Rng) -> StereoSample {
    let padded = pad_to_crop(sample, cfg.crop);
    let (max_y, max_x) = crop_offset_range(padded.height(), padded.width(), cfg.crop);
    let y0 = rng.random_range(0..=max_y);
    let x0 = rng.random_range(0..=max_x);
    crop_at(&padded, y0, x0, cfg.crop)
}

/// Per-channel mean, rounded.
pub fn mean_color(img: &RgbImage) -> [u8; 3] {
    let n = (img.width() as u64 * img.height() as u64).max(1);
    let mut s = [0u64; 3];
    for p in img.pixels() {
        for c in 0..3 {
            s[c] += p[c] as u64;
        }
    }
    s.map(|v| ((v as f64 / n as f64).round()) as u8)
}

/// `right'(x, y) = right(x, clamp(y - dy))`.
pub fn shift_rows(img: &RgbImage, dy: i32) -> RgbImage {
    let h = img.height() as i64;
    RgbImage::from_fn(img.width(), img.height(), |x, y| {
        let sy = (y as i64 - dy as i64).clamp(0, h - 1);
        *img.get_pixel(x, sy as u32)
    })
}

pub fn fill_rect(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32, color: [u8; 3]) {
    for y in y0..(y0 + h).min(img.height()) {
        for x in x0..(x0 + w).min(img.width()) {
            img.put_pixel(x, y, Rgb(color));
        }
    }
}

/// Vertical jitter and occlusion patches on the right view only. Patches
/// are filled with the right view's mean colour, measured after the shift
/// and before any patch, and are clamped to fit inside the image.
pub fn right_view_perturb(sample: &StereoSample, cfg: &AugmentConfig, rng: &mut impl Rng) -> StereoSample {
    let mut right = if cfg.y_jitter > 0 {
        let j = cfg.y_jitter as i32;
        shift_rows(&sample.right, rng.random_range(-j..=j))
    } else {
        sample.right.clone()
    };
    if rng.random_bool(cfg.erase_prob) {
        let color = mean_color(&right);
        let n = rng.random_range(cfg.erase_count[0]..=cfg.erase_count[1]);
        for _ in 0..n {
            let pw = rng.random_range(cfg.erase_size[0]..=cfg.erase_size[1]).min(right.width());
            let ph = rng.random_range(cfg.erase_size[0]..=cfg.erase_size[1]).min(right.height());
            let x0 = rng.random_range(0..=right.width() - pw);
            let y0 = rng.random_range(0..=right.height() - ph);
            fill_rect(&mut right, x0, y0, pw, ph, color);
        }
    }
    StereoSample {
        right,
        ..sample.clone()
    }
}

/// The full training transform.
pub fn augment(sample: &StereoSample, cfg: &AugmentConfig, rng: &mut impl Rng) -> StereoSample {
    let s = photometric_jitter(sample, cfg, rng);
    let s = match draw_scale(&s, cfg, rng) {
        Some((sx, sy)) => spatial_scale(&s, sx, sy),
        None => s,
    };
    let s = random_crop(&s, cfg, rng);
    right_view_perturb(&s, cfg, rng)
}
