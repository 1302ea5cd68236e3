//! Small convolutional super-resolution models applied after bicubic
//! upscaling. Inference is plain same-size convolution with replicate
//! padding; a single-channel model is applied to each RGB plane
//! independently.

mod io;
mod train;

pub use io::{load_weights, save_weights};
pub use train::{interior_mse, loss_gradient, train_patches, LayerGradients, ModelGradients};

use thiserror::Error;

use crate::img::{ColorSpace, Image, ImageError};

#[derive(Debug, Error)]
pub enum SrcnnError {
    #[error("model validation: {0}")]
    Invalid(String),
    #[error("input has {input} channels, model expects {model}")]
    ChannelMismatch { input: usize, model: usize },
    #[error("channel stack has {stack} channels, layer expects {layer}")]
    StackMismatch { stack: usize, layer: usize },
    #[error("training input: {0}")]
    Training(String),
    #[error("weight file {path}: {msg}")]
    Format { path: String, msg: String },
    #[error("weight file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::None => 0,
            Activation::Relu => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Activation> {
        match tag {
            0 => Some(Activation::None),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::None => v,
            Activation::Relu => v.max(0.0),
        }
    }
}

/// One convolution layer. Weights are `(out, in, kh, kw)` row-major,
/// kernels have odd extents so outputs keep the input size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    out_channels: usize,
    in_channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
    activation: Activation,
}

impl ConvLayer {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        activation: Activation,
    ) -> Result<ConvLayer, SrcnnError> {
        if out_channels == 0 || in_channels == 0 {
            return Err(SrcnnError::Invalid("zero channel count".into()));
        }
        if kernel_h.is_multiple_of(2)
            || kernel_w.is_multiple_of(2)
            || kernel_h == 0
            || kernel_w == 0
        {
            return Err(SrcnnError::Invalid(format!(
                "kernel {kernel_h}x{kernel_w} must have odd extents"
            )));
        }
        let want = out_channels * in_channels * kernel_h * kernel_w;
        if weights.len() != want {
            return Err(SrcnnError::Invalid(format!(
                "weight length {} does not match {want}",
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(SrcnnError::Invalid(format!(
                "bias length {} does not match {out_channels} output channels",
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(SrcnnError::Invalid("non-finite parameter".into()));
        }
        Ok(ConvLayer {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            weights,
            bias,
            activation,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_h(&self) -> usize {
        self.kernel_h
    }

    pub fn kernel_w(&self) -> usize {
        self.kernel_w
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    #[inline]
    fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * self.kernel_h + ky) * self.kernel_w + kx] as f64
    }
}

/// Shape of one layer for the random/parsed constructors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub activation: Activation,
}

/// A chain of convolution layers ending in a linear layer that maps back
/// to the input channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct SrcnnModel {
    input_channels: usize,
    layers: Vec<ConvLayer>,
}

impl SrcnnModel {
    pub fn new(input_channels: usize, layers: Vec<ConvLayer>) -> Result<SrcnnModel, SrcnnError> {
        if input_channels == 0 {
            return Err(SrcnnError::Invalid("zero input channels".into()));
        }
        if layers.is_empty() {
            return Err(SrcnnError::Invalid("model has no layers".into()));
        }
        let mut chain = input_channels;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_channels != chain {
                return Err(SrcnnError::Invalid(format!(
                    "layer {i} expects {} input channels, got {chain}",
                    layer.in_channels
                )));
            }
            chain = layer.out_channels;
        }
        let last = layers.last().unwrap();
        if last.out_channels != input_channels {
            return Err(SrcnnError::Invalid(format!(
                "final layer emits {} channels, model input has {input_channels}",
                last.out_channels
            )));
        }
        if last.activation != Activation::None {
            return Err(SrcnnError::Invalid(
                "final layer must be linear (no activation)".into(),
            ));
        }
        Ok(SrcnnModel {
            input_channels,
            layers,
        })
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    /// 1x1 single-channel passthrough (weight 1, bias 0). Its forward pass
    /// reproduces any `[0, 1]` input bit for bit.
    pub fn identity() -> SrcnnModel {
        let layer = ConvLayer::new(1, 1, 1, 1, vec![1.0], vec![0.0], Activation::None).unwrap();
        SrcnnModel::new(1, vec![layer]).unwrap()
    }

    /// Three-layer shape used for full-scale runs: 9x9x64 and 5x5x32 ReLU
    /// stages followed by a linear 5x5 reconstruction.
    pub fn default_architecture() -> Vec<LayerSpec> {
        vec![
            LayerSpec {
                out_channels: 64,
                kernel_h: 9,
                kernel_w: 9,
                activation: Activation::Relu,
            },
            LayerSpec {
                out_channels: 32,
                kernel_h: 5,
                kernel_w: 5,
                activation: Activation::Relu,
            },
            LayerSpec {
                out_channels: 1,
                kernel_h: 5,
                kernel_w: 5,
                activation: Activation::None,
            },
        ]
    }

    /// Uniform init scaled by fan-in, biases at zero.
    pub fn random(
        input_channels: usize,
        specs: &[LayerSpec],
        rng: &mut impl rand::Rng,
    ) -> Result<SrcnnModel, SrcnnError> {
        use rand::distributions::Distribution;
        let mut layers = Vec::with_capacity(specs.len());
        let mut in_channels = input_channels;
        for spec in specs {
            let fan_in = (in_channels * spec.kernel_h * spec.kernel_w) as f64;
            let std = (2.0 / fan_in).sqrt();
            let normal = rand::distributions::Uniform::new(-std, std);
            let n = spec.out_channels * in_channels * spec.kernel_h * spec.kernel_w;
            let weights: Vec<f32> = (0..n).map(|_| normal.sample(rng) as f32).collect();
            let bias = vec![0.0; spec.out_channels];
            layers.push(ConvLayer::new(
                spec.out_channels,
                in_channels,
                spec.kernel_h,
                spec.kernel_w,
                weights,
                bias,
                spec.activation,
            )?);
            in_channels = spec.out_channels;
        }
        SrcnnModel::new(input_channels, layers)
    }

    /// Start as an exact copy of the input: the first `input_channels`
    /// channels of every hidden layer carry the image through a unit center
    /// tap, the final layer reads only those carriers, and the remaining
    /// weights are small fan-in-scaled noise. Inputs in `[0, 1]` pass the
    /// ReLU stages unchanged, so training descends from the interpolated
    /// baseline instead of from noise.
    pub fn passthrough(
        input_channels: usize,
        specs: &[LayerSpec],
        rng: &mut impl rand::Rng,
    ) -> Result<SrcnnModel, SrcnnError> {
        use rand::distributions::Distribution;
        let mut layers = Vec::with_capacity(specs.len());
        let mut in_channels = input_channels;
        for (idx, spec) in specs.iter().enumerate() {
            if spec.out_channels < input_channels {
                return Err(SrcnnError::Invalid(format!(
                    "layer {idx} has {} channels, fewer than the {input_channels} carried",
                    spec.out_channels
                )));
            }
            let fan_in = (in_channels * spec.kernel_h * spec.kernel_w) as f64;
            let noise_w =
                rand::distributions::Uniform::new(-(2.0 / fan_in).sqrt(), (2.0 / fan_in).sqrt());
            let noise_b = rand::distributions::Uniform::new(-0.05, 0.05);
            let row = in_channels * spec.kernel_h * spec.kernel_w;
            let mut weights = vec![0.0f32; spec.out_channels * row];
            let mut bias = vec![0.0f32; spec.out_channels];
            if idx + 1 < specs.len() {
                for o in input_channels..spec.out_channels {
                    for w in &mut weights[o * row..(o + 1) * row] {
                        *w = noise_w.sample(rng) as f32;
                    }
                    bias[o] = noise_b.sample(rng) as f32;
                }
            }
            let center = (spec.kernel_h / 2) * spec.kernel_w + spec.kernel_w / 2;
            for c in 0..input_channels {
                weights[(c * in_channels + c) * spec.kernel_h * spec.kernel_w + center] = 1.0;
            }
            layers.push(ConvLayer::new(
                spec.out_channels,
                in_channels,
                spec.kernel_h,
                spec.kernel_w,
                weights,
                bias,
                spec.activation,
            )?);
            in_channels = spec.out_channels;
        }
        SrcnnModel::new(input_channels, layers)
    }

    /// Vertical and horizontal receptive-field radius of the whole chain.
    pub fn receptive_radius(&self) -> (usize, usize) {
        let ry = self.layers.iter().map(|l| l.kernel_h / 2).sum();
        let rx = self.layers.iter().map(|l| l.kernel_w / 2).sum();
        (ry, rx)
    }
}

/// Parse an architecture string like `"9x9x64,5x5x32,5x5x1"`
/// (`KHxKWxOUT` per layer). Hidden layers get ReLU, the last is linear.
pub fn parse_architecture(s: &str) -> Result<Vec<LayerSpec>, SrcnnError> {
    let bad = |msg: String| SrcnnError::Invalid(msg);
    let mut specs = Vec::new();
    let parts: Vec<&str> = s.split(',').collect();
    for (i, part) in parts.iter().enumerate() {
        let dims: Vec<&str> = part.trim().split('x').collect();
        if dims.len() != 3 {
            return Err(bad(format!("layer `{part}` is not KHxKWxOUT")));
        }
        let parse = |d: &str| {
            d.parse::<usize>()
                .map_err(|_| bad(format!("bad layer dimension `{d}`")))
        };
        specs.push(LayerSpec {
            kernel_h: parse(dims[0])?,
            kernel_w: parse(dims[1])?,
            out_channels: parse(dims[2])?,
            activation: if i + 1 == parts.len() {
                Activation::None
            } else {
                Activation::Relu
            },
        });
    }
    if specs.is_empty() {
        return Err(bad("empty architecture".into()));
    }
    Ok(specs)
}

/// Channel stack used between layers; accumulation happens in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, width: usize, height: usize) -> FeatureMap {
        FeatureMap {
            channels,
            width,
            height,
            data: vec![0.0; channels * width * height],
        }
    }

    pub fn from_image(img: &Image) -> FeatureMap {
        FeatureMap {
            channels: img.channels(),
            width: img.width(),
            height: img.height(),
            data: img.data().iter().map(|&v| v as f64).collect(),
        }
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }
}

/// Same-size convolution with replicate padding; bias added, activation
/// NOT applied (the forward pass does that per layer).
pub fn conv2d(stack: &FeatureMap, layer: &ConvLayer) -> Result<FeatureMap, SrcnnError> {
    if stack.channels != layer.in_channels {
        return Err(SrcnnError::StackMismatch {
            stack: stack.channels,
            layer: layer.in_channels,
        });
    }
    let (w, h) = (stack.width, stack.height);
    let (rh, rw) = (layer.kernel_h / 2, layer.kernel_w / 2);
    let mut out = FeatureMap::zeros(layer.out_channels, w, h);
    for o in 0..layer.out_channels {
        for y in 0..h {
            for x in 0..w {
                let mut acc = layer.bias[o] as f64;
                for i in 0..layer.in_channels {
                    for ky in 0..layer.kernel_h {
                        let sy = (y + ky).saturating_sub(rh).min(h - 1);
                        for kx in 0..layer.kernel_w {
                            let sx = (x + kx).saturating_sub(rw).min(w - 1);
                            acc += layer.weight(o, i, ky, kx) * stack.get(i, sx, sy);
                        }
                    }
                }
                out.set(o, x, y, acc);
            }
        }
    }
    Ok(out)
}

/// Run every layer (convolution then activation) on one channel stack.
/// No clamping; the caller decides what to do with the raw output.
pub(crate) fn forward_stack(
    model: &SrcnnModel,
    input: &FeatureMap,
) -> Result<FeatureMap, SrcnnError> {
    let mut cur = input.clone();
    for layer in &model.layers {
        let mut next = conv2d(&cur, layer)?;
        if layer.activation == Activation::Relu {
            for v in &mut next.data {
                *v = layer.activation.apply(*v);
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// Apply the model to an image, clamping the final output to `[0, 1]`.
/// A single-channel model runs independently on each plane of an RGB
/// input; otherwise the channel counts must match.
pub fn forward(model: &SrcnnModel, img: &Image) -> Result<Image, SrcnnError> {
    let run_plane = |fm: &FeatureMap| -> Result<Vec<f32>, SrcnnError> {
        let out = forward_stack(model, fm)?;
        Ok(out.data.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect())
    };
    if img.channels() == model.input_channels {
        let fm = FeatureMap::from_image(img);
        let data = run_plane(&fm)?;
        Ok(Image::from_data(img.width(), img.height(), img.color(), data).expect("same shape"))
    } else if model.input_channels == 1 && img.channels() == 3 {
        let n = img.width() * img.height();
        let mut data = Vec::with_capacity(3 * n);
        for c in 0..3 {
            let fm = FeatureMap {
                channels: 1,
                width: img.width(),
                height: img.height(),
                data: img.plane(c).iter().map(|&v| v as f64).collect(),
            };
            data.extend(run_plane(&fm)?);
        }
        Ok(Image::from_data(img.width(), img.height(), ColorSpace::Rgb, data).expect("same shape"))
    } else {
        Err(SrcnnError::ChannelMismatch {
            input: img.channels(),
            model: model.input_channels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::img::{ColorSpace, Image};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layer(
        out: usize,
        inp: usize,
        kh: usize,
        kw: usize,
        w: Vec<f32>,
        b: Vec<f32>,
        act: Activation,
    ) -> ConvLayer {
        ConvLayer::new(out, inp, kh, kw, w, b, act).unwrap()
    }

    fn random_stack(channels: usize, w: usize, h: usize, rng: &mut ChaCha8Rng) -> FeatureMap {
        FeatureMap {
            channels,
            width: w,
            height: h,
            data: (0..channels * w * h)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        }
    }

    /// Brute-force reference convolution written from the index formula.
    fn conv_reference(stack: &FeatureMap, l: &ConvLayer) -> FeatureMap {
        let mut out = FeatureMap::zeros(l.out_channels(), stack.width, stack.height);
        for o in 0..l.out_channels() {
            for y in 0..stack.height as isize {
                for x in 0..stack.width as isize {
                    let mut acc = l.bias()[o] as f64;
                    for i in 0..l.in_channels() {
                        for ky in 0..l.kernel_h() as isize {
                            for kx in 0..l.kernel_w() as isize {
                                let sy = (y + ky - l.kernel_h() as isize / 2)
                                    .clamp(0, stack.height as isize - 1);
                                let sx = (x + kx - l.kernel_w() as isize / 2)
                                    .clamp(0, stack.width as isize - 1);
                                let widx = ((o * l.in_channels() + i) * l.kernel_h() + ky as usize)
                                    * l.kernel_w()
                                    + kx as usize;
                                acc += l.weights()[widx] as f64
                                    * stack.get(i, sx as usize, sy as usize);
                            }
                        }
                    }
                    out.set(o, x as usize, y as usize, acc);
                }
            }
        }
        out
    }

    #[test]
    fn one_by_one_kernel_is_affine_map() {
        let l = layer(1, 1, 1, 1, vec![2.0], vec![0.25], Activation::None);
        let stack = FeatureMap {
            channels: 1,
            width: 2,
            height: 2,
            data: vec![0.0, 0.25, 0.5, 1.0],
        };
        let out = conv2d(&stack, &l).unwrap();
        for (a, b) in out.data.iter().zip(&stack.data) {
            assert!((a - (2.0 * b + 0.25)).abs() < 1e-12);
        }
    }

    #[test]
    fn box_filter_keeps_constant_with_replicate_padding() {
        let l = layer(1, 1, 3, 3, vec![1.0 / 9.0; 9], vec![0.0], Activation::None);
        let stack = FeatureMap {
            channels: 1,
            width: 4,
            height: 3,
            data: vec![0.6; 12],
        };
        let out = conv2d(&stack, &l).unwrap();
        // nine f32 copies of 1/9 do not sum to exactly one
        for &v in &out.data {
            assert!((v - 0.6f32 as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn conv_matches_reference_on_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let w = rng.gen_range(1..=12);
            let h = rng.gen_range(1..=12);
            let cin = rng.gen_range(1..=3);
            let cout = rng.gen_range(1..=3);
            let kh = [1, 3, 5][rng.gen_range(0..3)];
            let kw = [1, 3, 5][rng.gen_range(0..3)];
            let weights: Vec<f32> = (0..cout * cin * kh * kw)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let bias: Vec<f32> = (0..cout).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let l = layer(cout, cin, kh, kw, weights, bias, Activation::None);
            let stack = random_stack(cin, w, h, &mut rng);
            let got = conv2d(&stack, &l).unwrap();
            let want = conv_reference(&stack, &l);
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn channel_mismatch_rejected() {
        let l = layer(1, 2, 1, 1, vec![1.0, 1.0], vec![0.0], Activation::None);
        let stack = FeatureMap::zeros(1, 2, 2);
        assert!(matches!(
            conv2d(&stack, &l),
            Err(SrcnnError::StackMismatch { .. })
        ));
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(ConvLayer::new(1, 1, 2, 3, vec![0.0; 6], vec![0.0], Activation::None).is_err());
    }

    #[test]
    fn model_chain_validation() {
        let a = layer(4, 1, 3, 3, vec![0.0; 36], vec![0.0; 4], Activation::Relu);
        let b = layer(1, 4, 3, 3, vec![0.0; 36], vec![0.0], Activation::None);
        assert!(SrcnnModel::new(1, vec![a.clone(), b.clone()]).is_ok());
        // broken chain
        assert!(SrcnnModel::new(1, vec![b.clone()]).is_err());
        // final activation must be linear
        let c = layer(1, 4, 3, 3, vec![0.0; 36], vec![0.0], Activation::Relu);
        assert!(SrcnnModel::new(1, vec![a.clone(), c]).is_err());
        // final channels must match input
        let d = layer(2, 4, 3, 3, vec![0.0; 72], vec![0.0; 2], Activation::None);
        assert!(SrcnnModel::new(1, vec![a, d]).is_err());
    }

    #[test]
    fn identity_model_reproduces_input_exactly() {
        let model = SrcnnModel::identity();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut img = Image::new(7, 5, ColorSpace::Rgb);
        for v in img.data_mut() {
            *v = rng.gen_range(0.0..=1.0);
        }
        let out = forward(&model, &img).unwrap();
        assert_eq!(img, out);
    }

    #[test]
    fn forward_clamps_final_output() {
        let l = layer(1, 1, 1, 1, vec![1.0], vec![5.0], Activation::None);
        let model = SrcnnModel::new(1, vec![l]).unwrap();
        let img = Image::new(3, 3, ColorSpace::Gray);
        let out = forward(&model, &img).unwrap();
        for &v in out.data() {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn rgb_input_runs_per_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let specs = [
            LayerSpec {
                out_channels: 2,
                kernel_h: 3,
                kernel_w: 3,
                activation: Activation::Relu,
            },
            LayerSpec {
                out_channels: 1,
                kernel_h: 3,
                kernel_w: 3,
                activation: Activation::None,
            },
        ];
        let model = SrcnnModel::random(1, &specs, &mut rng).unwrap();
        let mut img = Image::new(6, 6, ColorSpace::Rgb);
        for v in img.data_mut() {
            *v = rng.gen_range(0.0..=1.0);
        }
        let got = forward(&model, &img).unwrap();
        for c in 0..3 {
            let plane = Image::from_data(6, 6, ColorSpace::Gray, img.plane(c).to_vec()).unwrap();
            let want = forward(&model, &plane).unwrap();
            assert_eq!(got.plane(c), want.plane(0));
        }
    }

    #[test]
    fn mismatched_channels_rejected_by_forward() {
        let specs = [LayerSpec {
            out_channels: 3,
            kernel_h: 1,
            kernel_w: 1,
            activation: Activation::None,
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = SrcnnModel::random(3, &specs, &mut rng).unwrap();
        let img = Image::new(2, 2, ColorSpace::Gray);
        assert!(matches!(
            forward(&model, &img),
            Err(SrcnnError::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn architecture_string_round_trip() {
        let specs = parse_architecture("9x9x64,5x5x32,5x5x1").unwrap();
        assert_eq!(specs, SrcnnModel::default_architecture());
        assert!(parse_architecture("9x9").is_err());
        assert!(parse_architecture("axbxc").is_err());
    }

    #[test]
    fn passthrough_model_reproduces_input_exactly() {
        let specs = parse_architecture("9x9x8,1x1x8,5x5x1").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = SrcnnModel::passthrough(1, &specs, &mut rng).unwrap();
        let mut img = Image::new(9, 7, ColorSpace::Gray);
        for v in img.data_mut() {
            *v = rng.gen_range(0.0..=1.0);
        }
        let out = forward(&model, &img).unwrap();
        assert_eq!(img, out);
    }

    #[test]
    fn passthrough_needs_width_for_carriers() {
        let specs = [
            LayerSpec {
                out_channels: 2,
                kernel_h: 3,
                kernel_w: 3,
                activation: Activation::Relu,
            },
            LayerSpec {
                out_channels: 3,
                kernel_h: 3,
                kernel_w: 3,
                activation: Activation::None,
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(SrcnnModel::passthrough(3, &specs, &mut rng).is_err());
        assert!(SrcnnModel::passthrough(1, &specs[..1], &mut rng).is_err());
    }
}
