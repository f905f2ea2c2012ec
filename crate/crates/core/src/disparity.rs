use serde::{Deserialize, Serialize};

/// Dense disparity in pixels with a per-pixel validity mask.
///
/// Invalid pixels are excluded from every statistic. Their stored value is
/// kept (readers store 0.0) but never interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
    valid: Vec<bool>,
}

impl DisparityMap {
    /// Fully valid map. Panics if `data.len() != width * height`.
    pub fn from_values(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height, "disparity buffer size");
        let valid = data.iter().map(|v| v.is_finite()).collect();
        Self {
            width,
            height,
            data,
            valid,
        }
    }

    /// Panics if either buffer is not `width * height` long.
    pub fn with_mask(width: usize, height: usize, data: Vec<f32>, valid: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height, "disparity buffer size");
        assert_eq!(valid.len(), width * height, "mask buffer size");
        Self {
            width,
            height,
            data,
            valid,
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self::from_values(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn mask_mut(&mut self) -> &mut [bool] {
        &mut self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f32, valid: bool) {
        let i = y * self.width + x;
        self.data[i] = value;
        self.valid[i] = valid;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Fraction of pixels carrying ground truth.
    pub fn density(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.valid_count() as f64 / self.data.len() as f64
    }

    /// `(min, max, mean)` over valid pixels, `None` when nothing is valid.
    pub fn stats(&self) -> Option<(f32, f32, f64)> {
        let mut min = f32::INFINITY;
        let mut max = f32::NEG_INFINITY;
        let mut sum = 0.0f64;
        let mut n = 0usize;
        for (&v, &ok) in self.data.iter().zip(&self.valid) {
            if ok {
                min = min.min(v);
                max = max.max(v);
                sum += v as f64;
                n += 1;
            }
        }
        (n > 0).then(|| (min, max, sum / n as f64))
    }

    /// Subsamples by an integer factor (nearest, block centre) and divides
    /// disparity by the same factor.
    pub fn downscale(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        let w = self.width.div_ceil(factor);
        let h = self.height.div_ceil(factor);
        let mut data = Vec::with_capacity(w * h);
        let mut valid = Vec::with_capacity(w * h);
        for y in 0..h {
            let sy = (y * factor + factor / 2).min(self.height - 1);
            for x in 0..w {
                let sx = (x * factor + factor / 2).min(self.width - 1);
                let i = sy * self.width + sx;
                data.push(self.data[i] / factor as f32);
                valid.push(self.valid[i]);
            }
        }
        Self::with_mask(w, h, data, valid)
    }
}
