//! Desk-scale trainer: plain SGD on interior mean squared error with
//! analytic gradients. The loss ignores a border of the model's receptive
//! radius (those outputs lean on replicate padding) and is measured on the
//! linear output, before the inference-time clamp.

use super::{conv2d, Activation, FeatureMap, SrcnnError, SrcnnModel};
use crate::img::Image;

#[derive(Debug, Clone)]
pub struct LayerGradients {
    /// Same `(out, in, kh, kw)` ordering as the layer's weights.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ModelGradients {
    pub loss: f64,
    pub layers: Vec<LayerGradients>,
}

fn check_pair(model: &SrcnnModel, degraded: &Image, clean: &Image) -> Result<(), SrcnnError> {
    if degraded.channels() != model.input_channels() {
        return Err(SrcnnError::ChannelMismatch {
            input: degraded.channels(),
            model: model.input_channels(),
        });
    }
    if degraded.width() != clean.width()
        || degraded.height() != clean.height()
        || degraded.channels() != clean.channels()
    {
        return Err(SrcnnError::Training(
            "degraded and clean patches differ in shape".into(),
        ));
    }
    let (ry, rx) = model.receptive_radius();
    if degraded.height() <= 2 * ry || degraded.width() <= 2 * rx {
        return Err(SrcnnError::Training(format!(
            "patch {}x{} leaves no interior for receptive radius ({ry},{rx})",
            degraded.width(),
            degraded.height()
        )));
    }
    Ok(())
}

/// Mean squared error between the model's raw output and the clean patch,
/// averaged over all channels of the interior region.
pub fn interior_mse(
    model: &SrcnnModel,
    degraded: &Image,
    clean: &Image,
) -> Result<f64, SrcnnError> {
    check_pair(model, degraded, clean)?;
    let out = super::forward_stack(model, &FeatureMap::from_image(degraded))?;
    let (ry, rx) = model.receptive_radius();
    let (w, h) = (degraded.width(), degraded.height());
    let mut sq = 0.0f64;
    let mut count = 0usize;
    for c in 0..out.channels {
        for y in ry..h - ry {
            for x in rx..w - rx {
                let d = out.get(c, x, y) - clean.get(c, x, y) as f64;
                sq += d * d;
                count += 1;
            }
        }
    }
    Ok(sq / count as f64)
}

/// Analytic gradient of [`interior_mse`] with respect to every weight and
/// bias. Replicate padding is handled exactly: contributions scatter back
/// to the clamped source pixel.
pub fn loss_gradient(
    model: &SrcnnModel,
    degraded: &Image,
    clean: &Image,
) -> Result<ModelGradients, SrcnnError> {
    check_pair(model, degraded, clean)?;
    let input = FeatureMap::from_image(degraded);
    let (w, h) = (input.width, input.height);

    // Forward pass keeping each layer's pre-activation and activated output.
    let mut pre: Vec<FeatureMap> = Vec::with_capacity(model.layers().len());
    let mut post: Vec<FeatureMap> = Vec::with_capacity(model.layers().len());
    let mut cur = input.clone();
    for layer in model.layers() {
        let z = conv2d(&cur, layer)?;
        let mut a = z.clone();
        if layer.activation == Activation::Relu {
            for v in &mut a.data {
                *v = v.max(0.0);
            }
        }
        pre.push(z);
        cur = a.clone();
        post.push(a);
    }

    let out = post.last().unwrap();
    let (ry, rx) = model.receptive_radius();
    let interior = (h - 2 * ry) * (w - 2 * rx);
    let n = (interior * out.channels) as f64;

    let mut loss = 0.0f64;
    let mut delta = FeatureMap::zeros(out.channels, w, h);
    for c in 0..out.channels {
        for y in ry..h - ry {
            for x in rx..w - rx {
                let d = out.get(c, x, y) - clean.get(c, x, y) as f64;
                loss += d * d;
                delta.set(c, x, y, 2.0 * d / n);
            }
        }
    }
    loss /= n;

    let mut grads: Vec<LayerGradients> = model
        .layers()
        .iter()
        .map(|l| LayerGradients {
            weights: vec![0.0; l.weights.len()],
            bias: vec![0.0; l.bias.len()],
        })
        .collect();

    for li in (0..model.layers().len()).rev() {
        let layer = &model.layers()[li];
        let (krh, krw) = (layer.kernel_h / 2, layer.kernel_w / 2);

        if layer.activation == Activation::Relu {
            let z = &pre[li];
            for (dv, zv) in delta.data.iter_mut().zip(&z.data) {
                if *zv <= 0.0 {
                    *dv = 0.0;
                }
            }
        }

        let layer_in = if li == 0 { &input } else { &post[li - 1] };
        let g = &mut grads[li];
        let mut din = FeatureMap::zeros(layer.in_channels, w, h);
        for o in 0..layer.out_channels {
            for y in 0..h {
                for x in 0..w {
                    let dv = delta.get(o, x, y);
                    if dv == 0.0 {
                        continue;
                    }
                    g.bias[o] += dv;
                    for i in 0..layer.in_channels {
                        for ky in 0..layer.kernel_h {
                            let sy = (y + ky).saturating_sub(krh).min(h - 1);
                            for kx in 0..layer.kernel_w {
                                let sx = (x + kx).saturating_sub(krw).min(w - 1);
                                let widx = ((o * layer.in_channels + i) * layer.kernel_h + ky)
                                    * layer.kernel_w
                                    + kx;
                                g.weights[widx] += dv * layer_in.get(i, sx, sy);
                                din.data[(i * h + sy) * w + sx] += dv * layer.weights[widx] as f64;
                            }
                        }
                    }
                }
            }
        }
        delta = din;
    }

    Ok(ModelGradients {
        loss,
        layers: grads,
    })
}

/// Plain SGD over `(degraded, clean)` patch pairs, visiting pairs in the
/// given order once per epoch. The returned trace holds one loss per
/// epoch, measured over the whole pair set before that epoch's updates.
pub fn train_patches(
    model: &SrcnnModel,
    pairs: &[(Image, Image)],
    rate: f64,
    epochs: usize,
) -> Result<(SrcnnModel, Vec<f64>), SrcnnError> {
    if pairs.is_empty() {
        return Err(SrcnnError::Training("empty pair set".into()));
    }
    if !(rate.is_finite() && rate > 0.0) {
        return Err(SrcnnError::Training(format!("non-positive rate {rate}")));
    }
    let (w0, h0) = (pairs[0].0.width(), pairs[0].0.height());
    for (degraded, clean) in pairs {
        if degraded.width() != w0 || degraded.height() != h0 {
            return Err(SrcnnError::Training(
                "patch sizes differ across pairs".into(),
            ));
        }
        check_pair(model, degraded, clean)?;
    }

    let mut current = model.clone();
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut sum = 0.0f64;
        for (degraded, clean) in pairs {
            sum += interior_mse(&current, degraded, clean)?;
        }
        trace.push(sum / pairs.len() as f64);

        for (degraded, clean) in pairs {
            let g = loss_gradient(&current, degraded, clean)?;
            for (layer, lg) in current.layers.iter_mut().zip(&g.layers) {
                for (w, dw) in layer.weights.iter_mut().zip(&lg.weights) {
                    *w = (*w as f64 - rate * dw) as f32;
                }
                for (b, db) in layer.bias.iter_mut().zip(&lg.bias) {
                    *b = (*b as f64 - rate * db) as f32;
                }
            }
        }
    }
    Ok((current, trace))
}
