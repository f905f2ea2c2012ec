use super::{ModelError, ModelWeights, Result};
use crate::tensor::{elementwise, Activation, Tensor};

/// Quarter-resolution feature map, shape `(1, F, H/4, W/4)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap(pub Tensor);

impl FeatureMap {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Per-GRU-level context: the initial hidden state and the three gate
/// biases (`cz`, `cr`, `cq`) injected at every update.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextFeatures {
    pub init_hidden: Vec<Tensor>,
    pub gates: Vec<[Tensor; 3]>,
}

fn relu(t: Tensor) -> Tensor {
    elementwise(&t, Activation::Relu)
}

/// Shared stem: 7x7/2 conv, 3x3/2 conv, one residual block. Output at 1/4.
fn trunk(net: &str, w: &ModelWeights, x: &Tensor) -> Result<Tensor> {
    let x = relu(w.conv(&format!("{net}.conv1"), x, 2, 3)?);
    let x = relu(w.conv(&format!("{net}.conv2"), &x, 2, 1)?);
    let y = relu(w.conv(&format!("{net}.res.conv1"), &x, 1, 1)?);
    let y = w.conv(&format!("{net}.res.conv2"), &y, 1, 1)?;
    Ok(relu(x.add(&y)?))
}

fn check_input(x: &Tensor) -> Result<()> {
    let [n, c, h, w] = x.shape();
    if n != 1 || c != 3 || h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
        return Err(ModelError::Architecture(format!(
            "encoder input must be (1, 3, 4k, 4m), got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

fn feature_net(w: &ModelWeights, x: &Tensor) -> Result<FeatureMap> {
    check_input(x)?;
    let t = trunk("fnet", w, x)?;
    Ok(FeatureMap(w.conv("fnet.out", &t, 1, 0)?))
}

/// Runs the shared-weight feature encoder on both views.
pub fn extract_features(left: &Tensor, right: &Tensor, weights: &ModelWeights) -> Result<(FeatureMap, FeatureMap)> {
    if left.shape() != right.shape() {
        return Err(ModelError::DimensionMismatch {
            left: (left.w(), left.h()),
            right: (right.w(), right.h()),
        });
    }
    Ok((feature_net(weights, left)?, feature_net(weights, right)?))
}

/// Context encoder on the left view. Level `l` lives at `1/(4*2^l)`
/// resolution; the hidden state starts as `tanh` of its head.
pub fn extract_context(left: &Tensor, weights: &ModelWeights) -> Result<ContextFeatures> {
    check_input(left)?;
    let arch = weights.arch();
    let h = arch.hidden_dim;
    let mut level_in = trunk("cnet", weights, left)?;
    let mut init_hidden = Vec::with_capacity(arch.gru_levels);
    let mut gates = Vec::with_capacity(arch.gru_levels);
    for l in 0..arch.gru_levels {
        if l > 0 {
            level_in = relu(weights.conv(&format!("cnet.down.{l}"), &level_in, 2, 1)?);
        }
        let hidden = elementwise(
            &weights.conv(&format!("cnet.hidden.{l}"), &level_in, 1, 1)?,
            Activation::Tanh,
        );
        let ctx = relu(weights.conv(&format!("cnet.context.{l}"), &level_in, 1, 1)?);
        let zqr = weights.conv(&format!("cnet.zqr.{l}"), &ctx, 1, 1)?;
        gates.push([
            zqr.narrow_channels(0, h)?,
            zqr.narrow_channels(h, h)?,
            zqr.narrow_channels(2 * h, h)?,
        ]);
        init_hidden.push(hidden);
    }
    Ok(ContextFeatures { init_hidden, gates })
}
