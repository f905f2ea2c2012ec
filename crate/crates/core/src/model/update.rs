//! Multi-level convolutional GRU update block.

use super::{ContextFeatures, ModelError, ModelWeights, Result};
use crate::tensor::{avg_pool2x, concat_channels, elementwise, resize_bilinear, sigmoid, Activation, Tensor};

/// Hidden state per GRU level, finest (1/4) first.
#[derive(Debug, Clone, PartialEq)]
pub struct GruState {
    pub hidden: Vec<Tensor>,
}

impl GruState {
    pub fn from_context(ctx: &ContextFeatures) -> Self {
        Self {
            hidden: ctx.init_hidden.clone(),
        }
    }

    /// Largest absolute hidden value across all levels.
    pub fn max_abs(&self) -> f32 {
        self.hidden
            .iter()
            .flat_map(|t| t.data().iter())
            .fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

/// One convolutional GRU step:
///
/// ```text
/// z  = sigmoid(convz([h, x]) + cz)
/// r  = sigmoid(convr([h, x]) + cr)
/// q  = tanh(convq([r*h, x]) + cq)
/// h' = (1 - z) * h + z * q
/// ```
pub fn conv_gru_cell(
    weights: &ModelWeights,
    prefix: &str,
    h: &Tensor,
    gates: &[Tensor; 3],
    inputs: &[&Tensor],
) -> Result<Tensor> {
    let mut parts: Vec<&Tensor> = Vec::with_capacity(inputs.len() + 1);
    parts.push(h);
    parts.extend_from_slice(inputs);
    let hx = concat_channels(&parts)?;
    let z = weights
        .conv(&format!("{prefix}.convz"), &hx, 1, 1)?
        .zip_map(&gates[0], |a, b| sigmoid(a + b))?;
    let r = weights
        .conv(&format!("{prefix}.convr"), &hx, 1, 1)?
        .zip_map(&gates[1], |a, b| sigmoid(a + b))?;
    let rh = r.mul(h)?;
    parts[0] = &rh;
    let rhx = concat_channels(&parts)?;
    let q = weights
        .conv(&format!("{prefix}.convq"), &rhx, 1, 1)?
        .zip_map(&gates[2], |a, b| (a + b).tanh())?;
    let mut out = h.clone();
    for ((o, &zv), &qv) in out.data_mut().iter_mut().zip(z.data()).zip(q.data()) {
        // clamp keeps the tanh bound exact under rounding
        *o = ((1.0 - zv) * *o + zv * qv).clamp(-1.0, 1.0);
    }
    Ok(out)
}

fn relu(t: Tensor) -> Tensor {
    elementwise(&t, Activation::Relu)
}

/// Motion features from the correlation window and the current disparity;
/// the raw disparity is appended as the last channel.
fn motion_features(weights: &ModelWeights, disp: &Tensor, corr: &Tensor) -> Result<Tensor> {
    let c = relu(weights.conv("update.encoder.convc1", corr, 1, 0)?);
    let c = relu(weights.conv("update.encoder.convc2", &c, 1, 1)?);
    let d = relu(weights.conv("update.encoder.convd1", disp, 1, 3)?);
    let d = relu(weights.conv("update.encoder.convd2", &d, 1, 1)?);
    let m = relu(weights.conv("update.encoder.conv", &concat_channels(&[&c, &d])?, 1, 1)?);
    Ok(concat_channels(&[&m, disp])?)
}

/// Updates every GRU level, coarsest first, and returns the new state with
/// the disparity increment predicted from the finest level.
///
/// Level `l > 0` sees the 2x average-pooled state of level `l - 1`; every
/// level but the coarsest also sees the bilinearly upsampled, freshly
/// updated state of level `l + 1`. Only level 0 consumes `corr`.
pub fn gru_update(
    state: &GruState,
    context: &ContextFeatures,
    corr: &Tensor,
    disp: &Tensor,
    weights: &ModelWeights,
) -> Result<(GruState, Tensor)> {
    let levels = weights.arch().gru_levels;
    if state.hidden.len() != levels || context.gates.len() != levels {
        return Err(ModelError::Architecture(format!(
            "expected {levels} GRU levels, state has {} and context {}",
            state.hidden.len(),
            context.gates.len()
        )));
    }
    let mut hidden = state.hidden.clone();
    for l in (0..levels).rev() {
        let target = &hidden[l];
        let (th, tw) = (target.h(), target.w());
        let finer = if l == 0 {
            motion_features(weights, disp, corr)?
        } else {
            avg_pool2x(&hidden[l - 1])
        };
        let coarser = (l + 1 < levels).then(|| resize_bilinear(&hidden[l + 1], th, tw));
        let mut inputs = vec![&finer];
        if let Some(c) = &coarser {
            inputs.push(c);
        }
        hidden[l] = conv_gru_cell(
            weights,
            &format!("update.gru.{l}"),
            &hidden[l],
            &context.gates[l],
            &inputs,
        )?;
    }
    let head = relu(weights.conv("update.disp_head.conv1", &hidden[0], 1, 1)?);
    let delta = weights.conv("update.disp_head.conv2", &head, 1, 1)?;
    Ok((GruState { hidden }, delta))
}

/// Convex-upsampling mask logits from the finest hidden state, scaled by
/// 0.25.
pub fn mask_logits(state: &GruState, weights: &ModelWeights) -> Result<Tensor> {
    let m = relu(weights.conv("update.mask.conv1", &state.hidden[0], 1, 1)?);
    Ok(weights.conv("update.mask.conv2", &m, 1, 0)?.scale(0.25))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{extract_context, Architecture};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_arch() -> Architecture {
        Architecture {
            encoder_dims: [4, 4],
            feature_dim: 4,
            hidden_dim: 4,
            gru_levels: 3,
            corr_levels: 2,
            corr_radius: 1,
            motion_branch_dim: 4,
            motion_dim: 4,
            head_dim: 4,
            iters: 2,
        }
    }

    fn zero_context(arch: &Architecture, h: usize, w: usize) -> ContextFeatures {
        let mut init_hidden = Vec::new();
        let mut gates = Vec::new();
        for l in 0..arch.gru_levels {
            let s = [1, arch.hidden_dim, h >> l, w >> l];
            init_hidden.push(Tensor::zeros(s));
            gates.push([Tensor::zeros(s), Tensor::zeros(s), Tensor::zeros(s)]);
        }
        ContextFeatures { init_hidden, gates }
    }

    #[test]
    fn zero_weights_zero_state_stays_zero() {
        let arch = tiny_arch();
        let w = ModelWeights::zeros(&arch).unwrap();
        let ctx = zero_context(&arch, 8, 8);
        let state = GruState::from_context(&ctx);
        let corr = Tensor::zeros([1, arch.corr_channels(), 8, 8]);
        let disp = Tensor::zeros([1, 1, 8, 8]);
        let (next, delta) = gru_update(&state, &ctx, &corr, &disp, &w).unwrap();
        assert!(next.hidden.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
        assert!(delta.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn closed_update_gate_keeps_state() {
        let arch = tiny_arch();
        let mut w = ModelWeights::random(&arch, 21).unwrap();
        for l in 0..arch.gru_levels {
            let name = format!("update.gru.{l}.convz.bias");
            let mut b = w.get(&name).unwrap().clone();
            b.data_mut().fill(-20.0);
            w.set(&name, b).unwrap();
            // Zero weights so the gate pre-activation is exactly the bias.
            let name = format!("update.gru.{l}.convz.weight");
            let z = Tensor::zeros(w.get(&name).unwrap().shape());
            w.set(&name, z).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = Tensor::from_fn([1, 3, 32, 32], |_, _, _, _| rng.random_range(-1.0..1.0));
        let ctx = extract_context(&img, &w).unwrap();
        let state = GruState::from_context(&ctx);
        let corr = Tensor::from_fn([1, arch.corr_channels(), 8, 8], |_, _, _, _| rng.random_range(-1.0..1.0));
        let disp = Tensor::zeros([1, 1, 8, 8]);
        let (next, _) = gru_update(&state, &ctx, &corr, &disp, &w).unwrap();
        for (a, b) in next.hidden.iter().zip(&state.hidden) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn cell_matches_scalar_reference_at_1x1() {
        // hidden 1, one input channel, 1x1 grid: 3x3 convs with pad 1 reduce
        // to their centre tap.
        let arch = Architecture {
            encoder_dims: [1, 1],
            feature_dim: 1,
            hidden_dim: 1,
            gru_levels: 1,
            corr_levels: 1,
            corr_radius: 0,
            motion_branch_dim: 1,
            motion_dim: 2,
            head_dim: 1,
            iters: 1,
        };
        let mut w = ModelWeights::zeros(&arch).unwrap();
        let set = |w: &mut ModelWeights, name: &str, vals: &[f32]| {
            let t = w.get(name).unwrap();
            let shape = t.shape();
            let mut data = vec![0.0; t.len()];
            // centre taps for each (co=0, ci) of a 3x3 kernel
            for (ci, v) in vals.iter().enumerate() {
                data[ci * 9 + 4] = *v;
            }
            w.set(name, Tensor::new(shape, data).unwrap()).unwrap();
        };
        let (wz, wr, wq) = ([0.7, -0.4, 0.2], [-0.3, 0.9, 0.5], [1.1, -0.6, 0.8]);
        set(&mut w, "update.gru.0.convz.weight", &wz);
        set(&mut w, "update.gru.0.convr.weight", &wr);
        set(&mut w, "update.gru.0.convq.weight", &wq);
        let bz = 0.1f32;
        let mut b = Tensor::zeros([1, 1, 1, 1]);
        b.data_mut()[0] = bz;
        w.set("update.gru.0.convz.bias", b).unwrap();

        let (h, x1, x2) = (0.35f32, -0.8f32, 0.45f32);
        let (cz, cr, cq) = (0.05f32, -0.2f32, 0.3f32);
        let t = |v: f32| Tensor::new([1, 1, 1, 1], vec![v]).unwrap();
        let x = Tensor::new([1, 2, 1, 1], vec![x1, x2]).unwrap();
        let got = conv_gru_cell(&w, "update.gru.0", &t(h), &[t(cz), t(cr), t(cq)], &[&x]).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (hd, x1d, x2d) = (h as f64, x1 as f64, x2 as f64);
        let z = sig(wz[0] as f64 * hd + wz[1] as f64 * x1d + wz[2] as f64 * x2d + bz as f64 + cz as f64);
        let r = sig(wr[0] as f64 * hd + wr[1] as f64 * x1d + wr[2] as f64 * x2d + cr as f64);
        let q = (wq[0] as f64 * r * hd + wq[1] as f64 * x1d + wq[2] as f64 * x2d + cq as f64).tanh();
        let want = (1.0 - z) * hd + z * q;
        assert!((got.data()[0] as f64 - want).abs() < 1e-6, "{} vs {want}", got.data()[0]);
    }

    #[test]
    fn extreme_weights_keep_state_bounded() {
        let arch = tiny_arch();
        let mut w = ModelWeights::random(&arch, 8).unwrap();
        for spec in arch.manifest() {
            let t = w.get(&spec.name).unwrap().scale(50.0);
            w.set(&spec.name, t).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = Tensor::from_fn([1, 3, 32, 32], |_, _, _, _| rng.random_range(-1.0..1.0));
        let ctx = extract_context(&img, &w).unwrap();
        let mut state = GruState::from_context(&ctx);
        let mut disp = Tensor::zeros([1, 1, 8, 8]);
        for _ in 0..10 {
            let corr = Tensor::from_fn([1, arch.corr_channels(), 8, 8], |_, _, _, _| rng.random_range(-10.0..10.0));
            let (s, d) = gru_update(&state, &ctx, &corr, &disp, &w).unwrap();
            state = s;
            disp = disp.add(&d).unwrap();
            assert!(state.max_abs() <= 1.0);
        }
    }
}
