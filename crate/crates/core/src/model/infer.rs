use image::RgbImage;

use super::{
    build_correlation_pyramid, convex_upsample, extract_context, extract_features, gru_update, lookup, mask_logits,
    ContextFeatures, CorrelationPyramid, GruState, ModelError, ModelWeights, Result,
};
use crate::disparity::DisparityMap;
use crate::tensor::Tensor;

/// Original size and the rows/columns appended by [`pad_to_multiple`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadRecord {
    pub height: usize,
    pub width: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

/// Edge-replicates the bottom rows and right columns so both spatial
/// dimensions become the least multiple of `multiple` not below the input.
pub fn pad_to_multiple(image: &Tensor, multiple: usize) -> (Tensor, PadRecord) {
    let m = multiple.max(1);
    let [_, _, h, w] = image.shape();
    let ph = h.div_ceil(m).max(1) * m;
    let pw = w.div_ceil(m).max(1) * m;
    let rec = PadRecord {
        height: h,
        width: w,
        pad_h: ph - h,
        pad_w: pw - w,
    };
    if ph == h && pw == w {
        return (image.clone(), rec);
    }
    let [n, c, _, _] = image.shape();
    let padded = Tensor::from_fn([n, c, ph, pw], |ni, ci, y, x| {
        image.at(ni, ci, y.min(h - 1), x.min(w - 1))
    });
    (padded, rec)
}

/// `(1, 3, H, W)` tensor with pixel values mapped to `[-1, 1]`.
pub fn image_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Tensor::from_fn([1, 3, h, w], |_, c, y, x| {
        2.0 * (raw[(y * w + x) * 3 + c] as f32 / 255.0) - 1.0
    })
}

/// Stepwise inference state. [`infer`] is the one-shot wrapper.
pub struct InferenceSession<'w> {
    weights: &'w ModelWeights,
    pad: PadRecord,
    pyramid: CorrelationPyramid,
    context: ContextFeatures,
    state: GruState,
    disp: Tensor,
    iterations: usize,
}

impl<'w> InferenceSession<'w> {
    /// Pads both views, runs the encoders and builds the pyramid. The
    /// disparity field starts at zero.
    pub fn new(left: &Tensor, right: &Tensor, weights: &'w ModelWeights) -> Result<Self> {
        if left.shape() != right.shape() {
            return Err(ModelError::DimensionMismatch {
                left: (left.w(), left.h()),
                right: (right.w(), right.h()),
            });
        }
        let (l, pad) = pad_to_multiple(left, 32);
        let (r, _) = pad_to_multiple(right, 32);
        let arch = weights.arch();
        let (fl, fr) = extract_features(&l, &r, weights)?;
        let pyramid = build_correlation_pyramid(&fl, &fr, arch.corr_levels)?;
        let context = extract_context(&l, weights)?;
        let state = GruState::from_context(&context);
        let [_, _, h4, w4] = fl.tensor().shape();
        Ok(Self {
            weights,
            pad,
            pyramid,
            context,
            state,
            disp: Tensor::zeros([1, 1, h4, w4]),
            iterations: 0,
        })
    }

    /// One lookup + GRU update; adds the predicted increment to the field.
    pub fn step(&mut self) -> Result<()> {
        let corr = lookup(&self.pyramid, &self.disp, self.weights.arch().corr_radius)?;
        let (state, delta) = gru_update(&self.state, &self.context, &corr, &self.disp, self.weights)?;
        self.state = state;
        self.disp = self.disp.add(&delta)?;
        self.iterations += 1;
        Ok(())
    }

    pub fn state(&self) -> &GruState {
        &self.state
    }

    /// Current quarter-resolution field (padded grid).
    pub fn quarter_disparity(&self) -> &Tensor {
        &self.disp
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn pad_record(&self) -> PadRecord {
        self.pad
    }

    /// Full-resolution disparity cropped back to the input size.
    pub fn upsampled(&self) -> Result<Tensor> {
        let mask = mask_logits(&self.state, self.weights)?;
        let up = convex_upsample(&self.disp, &mask)?;
        Ok(up.crop(self.pad.height, self.pad.width)?)
    }
}

/// Full inference on a rectified pair. Output has the input's dimensions
/// and every pixel is marked valid; values are reported raw.
pub fn infer(left: &RgbImage, right: &RgbImage, weights: &ModelWeights, iters: usize) -> Result<DisparityMap> {
    if left.dimensions() != right.dimensions() {
        let (lw, lh) = left.dimensions();
        let (rw, rh) = right.dimensions();
        return Err(ModelError::DimensionMismatch {
            left: (lw as usize, lh as usize),
            right: (rw as usize, rh as usize),
        });
    }
    let l = image_to_tensor(left);
    let r = image_to_tensor(right);
    let mut session = InferenceSession::new(&l, &r, weights)?;
    for _ in 0..iters {
        session.step()?;
    }
    let up = session.upsampled()?;
    let (h, w) = (up.h(), up.w());
    let data = up.into_data();
    let valid = vec![true; data.len()];
    Ok(DisparityMap::with_mask(w, h, data, valid))
}
