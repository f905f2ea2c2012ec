//! Row-wise correlation pyramid and windowed lookup.

use rayon::prelude::*;

use super::{FeatureMap, ModelError, Result};
use crate::tensor::{avg_pool_last, bilinear_sample_1d, Tensor};

/// One pyramid level: for each `(row, left column)` a vector of matching
/// costs over (pooled) right columns, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationVolume {
    pub height: usize,
    pub width: usize,
    pub len: usize,
    pub data: Vec<f32>,
}

impl CorrelationVolume {
    #[inline]
    pub fn row(&self, i: usize, j: usize) -> &[f32] {
        let start = (i * self.width + j) * self.len;
        &self.data[start..start + self.len]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[(i * self.width + j) * self.len + k]
    }

    fn as_tensor(&self) -> Tensor {
        Tensor::new([1, self.height, self.width, self.len], self.data.clone()).expect("volume size")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationPyramid {
    pub levels: Vec<CorrelationVolume>,
}

/// `level0[i][j][k] = (1/sqrt(F)) * sum_c left[c,i,j] * right[c,i,k]`;
/// level `l` pools level 0 by `2^l` along `k`.
pub fn build_correlation_pyramid(left: &FeatureMap, right: &FeatureMap, levels: usize) -> Result<CorrelationPyramid> {
    let (fl, fr) = (left.tensor(), right.tensor());
    if fl.shape() != fr.shape() {
        return Err(ModelError::Tensor(crate::tensor::TensorError::ShapeMismatch(
            fl.shape(),
            fr.shape(),
        )));
    }
    if levels == 0 {
        return Err(ModelError::Architecture("pyramid needs at least one level".into()));
    }
    let [_, f, h, w] = fl.shape();
    let norm = 1.0 / (f as f32).sqrt();
    let mut data = vec![0.0f32; h * w * w];
    data.par_chunks_mut(w * w).enumerate().for_each(|(i, out)| {
        for c in 0..f {
            let lrow = &fl.plane(0, c)[i * w..(i + 1) * w];
            let rrow = &fr.plane(0, c)[i * w..(i + 1) * w];
            for (j, &a) in lrow.iter().enumerate() {
                let dst = &mut out[j * w..(j + 1) * w];
                for (d, &b) in dst.iter_mut().zip(rrow) {
                    *d += a * b;
                }
            }
        }
        for v in out.iter_mut() {
            *v *= norm;
        }
    });
    let base = CorrelationVolume {
        height: h,
        width: w,
        len: w,
        data,
    };
    let base_t = base.as_tensor();
    let mut out = vec![base];
    for l in 1..levels {
        let pooled = avg_pool_last(&base_t, 1 << l)?;
        out.push(CorrelationVolume {
            height: h,
            width: w,
            len: pooled.w(),
            data: pooled.into_data(),
        });
    }
    Ok(CorrelationPyramid { levels: out })
}

/// Samples `2*radius+1` costs per level around the current match.
///
/// At level `l` the window is centred at `(j - d) / 2^l` and spans integer
/// offsets `-radius..=radius` in that level's units, so coarser levels
/// cover a proportionally wider disparity range. Output channel
/// `l * (2r+1) + (offset + r)`.
pub fn lookup(pyr: &CorrelationPyramid, disp: &Tensor, radius: usize) -> Result<Tensor> {
    let base = &pyr.levels[0];
    let (h, w) = (base.height, base.width);
    if disp.shape() != [1, 1, h, w] {
        return Err(ModelError::Tensor(crate::tensor::TensorError::ShapeMismatch(
            disp.shape(),
            [1, 1, h, w],
        )));
    }
    let taps = 2 * radius + 1;
    let channels = pyr.levels.len() * taps;
    let hw = h * w;
    let mut out = vec![0.0f32; channels * hw];
    for (l, vol) in pyr.levels.iter().enumerate() {
        let scale = (1u32 << l) as f32;
        let chunk = &mut out[l * taps * hw..(l + 1) * taps * hw];
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                let centre = (j as f32 - disp.data()[p]) / scale;
                let row = vol.row(i, j);
                for t in 0..taps {
                    let x = centre + t as f32 - radius as f32;
                    chunk[t * hw + p] = bilinear_sample_1d(row, x);
                }
            }
        }
    }
    Ok(Tensor::new([1, channels, h, w], out)?)
}
