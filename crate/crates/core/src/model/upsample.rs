use super::{ModelError, Result};
use crate::tensor::{softmax_in_place, Tensor};

pub const UPSAMPLE_FACTOR: usize = 4;

/// Convex upsampling by 4.
///
/// Mask channel `k * 16 + dy * 4 + dx` weights coarse neighbour
/// `k = ky * 3 + kx` (offset `(ky - 1, kx - 1)`) for sub-pixel `(dy, dx)`.
/// Weights are softmax-normalised over `k`; the result is multiplied by 4 to
/// express disparity at full resolution. Neighbours outside the grid repeat
/// the edge value, so every output is a convex combination of real cells.
pub fn convex_upsample(disp: &Tensor, mask_logits: &Tensor) -> Result<Tensor> {
    let f = UPSAMPLE_FACTOR;
    let sub = f * f;
    let [n, c, h, w] = disp.shape();
    if n != 1 || c != 1 {
        return Err(ModelError::Architecture(format!(
            "disparity field must be (1, 1, h, w), got {:?}",
            disp.shape()
        )));
    }
    if mask_logits.shape() != [1, 9 * sub, h, w] {
        return Err(ModelError::Architecture(format!(
            "mask must be (1, {}, {h}, {w}), got {:?}",
            9 * sub,
            mask_logits.shape()
        )));
    }
    let (oh, ow) = (h * f, w * f);
    let mut out = vec![0.0f32; oh * ow];
    let mut weights = [0.0f32; 9];
    let mut neigh = [0.0f32; 9];
    for y in 0..h {
        for x in 0..w {
            for (k, v) in neigh.iter_mut().enumerate() {
                let ny = (y + k / 3).saturating_sub(1).min(h - 1);
                let nx = (x + k % 3).saturating_sub(1).min(w - 1);
                *v = disp.at(0, 0, ny, nx);
            }
            for dy in 0..f {
                for dx in 0..f {
                    let s = dy * f + dx;
                    for (k, wk) in weights.iter_mut().enumerate() {
                        *wk = mask_logits.at(0, k * sub + s, y, x);
                    }
                    softmax_in_place(&mut weights);
                    let mut acc = 0.0f32;
                    for k in 0..9 {
                        acc += weights[k] * neigh[k];
                    }
                    out[(y * f + dy) * ow + x * f + dx] = f as f32 * acc;
                }
            }
        }
    }
    Ok(Tensor::new([1, 1, oh, ow], out)?)
}
