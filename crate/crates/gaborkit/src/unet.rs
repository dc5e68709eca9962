//! The convolutional auto-encoder.
//!
//! Topology: a stem of two 3x3 convolutions with rectification brings the
//! single input channel to `base_channels`. Each of `depth` down blocks max
//! pools by two and applies two convolutions that double the channel count.
//! Each up block transposes-convolves back up (halving channels and doubling
//! the side), concatenates the mirror feature map from the encoder through a
//! skip connection, and applies two convolutions back to the mirror's
//! channel count. A final 1x1 convolution with rectification projects to one
//! non-negative output channel, so outputs satisfy the same constraints as
//! magnitude images. Spatial extents are preserved end to end.
//!
//! Gradients flow through a hand-written reverse pass; there is no autodiff.
//! Forward returns an activation cache holding exactly what the backward
//! pass consumes.

use crate::error::{Error, Result};
use crate::layers::{
    concat_channels, conv1x1, conv1x1_backward, conv2d, conv2d_backward, convtranspose2,
    convtranspose2_backward, maxpool2, maxpool2_backward, relu, relu_backward, split_channels,
    PoolIndices,
};
use crate::rng::SplitMix64;
use crate::tensor::Tensor4;

/// Architecture hyper-parameters. Convolution kernels are fixed at 3x3
/// (2x2 for the up-sampling transpose).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UNetConfig {
    /// Input (and output) side length in pixels; a power of two.
    pub input_size: usize,
    /// Number of down blocks and of up blocks.
    pub depth: usize,
    /// Channels produced by the stem.
    pub base_channels: usize,
    /// Weight-initialization seed.
    pub seed: u64,
}

impl UNetConfig {
    pub fn new(input_size: usize, depth: usize, base_channels: usize, seed: u64) -> Result<Self> {
        let config = UNetConfig {
            input_size,
            depth,
            base_channels,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.input_size.is_power_of_two() || self.input_size < 2 {
            return Err(Error::GridSize(self.input_size));
        }
        if self.depth == 0 {
            return Err(Error::Parameter("depth must be at least 1".into()));
        }
        if self.input_size >> self.depth == 0 {
            return Err(Error::Parameter(format!(
                "depth {} collapses a {} pixel input below 1 pixel",
                self.depth, self.input_size
            )));
        }
        if self.base_channels == 0 {
            return Err(Error::Parameter("base_channels must be at least 1".into()));
        }
        Ok(())
    }

    /// Encoder feature channels: stem output plus each down block's output,
    /// `base * 2^d` for d = 0..=depth.
    pub fn encoder_channels(&self) -> Vec<usize> {
        (0..=self.depth).map(|d| self.base_channels << d).collect()
    }

    /// Spatial side length at the bottleneck.
    pub fn bottleneck_size(&self) -> usize {
        self.input_size >> self.depth
    }
}

/// One convolution's weights, bias, and their gradient buffers.
#[derive(Clone, Debug)]
pub struct ConvParam {
    pub weight: Tensor4,
    pub bias: Vec<f64>,
    pub grad_weight: Tensor4,
    pub grad_bias: Vec<f64>,
}

impl ConvParam {
    fn zeros(dims: [usize; 4], bias_len: usize) -> Self {
        ConvParam {
            weight: Tensor4::zeros(dims),
            bias: vec![0.0; bias_len],
            grad_weight: Tensor4::zeros(dims),
            grad_bias: vec![0.0; bias_len],
        }
    }

    fn init(&mut self, rng: &mut SplitMix64, fan_in: usize, fan_out: usize) {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in self.weight.data_mut() {
            *w = rng.next_symmetric(bound);
        }
        // Biases stay zero.
    }

    fn apply_sgd(&mut self, lr: f64) {
        for (w, g) in self
            .weight
            .data_mut()
            .iter_mut()
            .zip(self.grad_weight.data())
        {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&self.grad_bias) {
            *b -= lr * g;
        }
        self.grad_weight.fill(0.0);
        self.grad_bias.fill(0.0);
    }
}

#[derive(Clone, Debug)]
pub struct UpBlockParams {
    pub tconv: ConvParam,
    pub convs: [ConvParam; 2],
}

/// The ordered, named collection of trainable arrays.
///
/// Array order and names are fixed by construction (stem, down blocks in
/// order, up blocks in order, head) and are part of the checkpoint format.
#[derive(Clone, Debug)]
pub struct UNetParams {
    pub config: UNetConfig,
    pub stem: [ConvParam; 2],
    pub downs: Vec<[ConvParam; 2]>,
    pub ups: Vec<UpBlockParams>,
    pub head: ConvParam,
}

/// Borrowed view of one named parameter array and its gradient.
pub struct ParamView<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub value: &'a [f64],
    pub grad: &'a [f64],
}

impl UNetParams {
    /// Allocates the parameter set with all arrays zeroed.
    pub fn zeroed(config: UNetConfig) -> Result<Self> {
        config.validate()?;
        let base = config.base_channels;
        let stem = [
            ConvParam::zeros([base, 1, 3, 3], base),
            ConvParam::zeros([base, base, 3, 3], base),
        ];
        let mut downs = Vec::with_capacity(config.depth);
        for d in 1..=config.depth {
            let cin = base << (d - 1);
            let cout = base << d;
            downs.push([
                ConvParam::zeros([cout, cin, 3, 3], cout),
                ConvParam::zeros([cout, cout, 3, 3], cout),
            ]);
        }
        let mut ups = Vec::with_capacity(config.depth);
        for u in 0..config.depth {
            let cin = base << (config.depth - u);
            let half = cin / 2;
            ups.push(UpBlockParams {
                tconv: ConvParam::zeros([cin, half, 2, 2], half),
                convs: [
                    ConvParam::zeros([half, cin, 3, 3], half),
                    ConvParam::zeros([half, half, 3, 3], half),
                ],
            });
        }
        let head = ConvParam::zeros([1, base, 1, 1], 1);
        Ok(UNetParams {
            config,
            stem,
            downs,
            ups,
            head,
        })
    }

    /// Seeded initialization: kernels uniform on (-b, b) with
    /// `b = sqrt(6 / (fan_in + fan_out))` where the fans count
    /// channels times kernel area; biases zero. One generator stream fills
    /// the arrays in their fixed order, so a seed pins every weight.
    pub fn init(config: UNetConfig) -> Result<Self> {
        let mut params = UNetParams::zeroed(config)?;
        let mut rng = SplitMix64::new(config.seed);
        for (conv, _) in params.conv_params_mut() {
            let (fan_in, fan_out) = fans(conv.weight.dims());
            conv.init(&mut rng, fan_in, fan_out);
        }
        Ok(params)
    }

    // Every ConvParam in fixed order with its name prefix.
    fn conv_params_mut(&mut self) -> Vec<(&mut ConvParam, String)> {
        let mut all: Vec<(&mut ConvParam, String)> = Vec::new();
        for (i, conv) in self.stem.iter_mut().enumerate() {
            all.push((conv, format!("stem.conv{}", i + 1)));
        }
        for (d, block) in self.downs.iter_mut().enumerate() {
            for (i, conv) in block.iter_mut().enumerate() {
                all.push((conv, format!("down{}.conv{}", d + 1, i + 1)));
            }
        }
        for (u, block) in self.ups.iter_mut().enumerate() {
            all.push((&mut block.tconv, format!("up{}.tconv", u + 1)));
            for (i, conv) in block.convs.iter_mut().enumerate() {
                all.push((conv, format!("up{}.conv{}", u + 1, i + 1)));
            }
        }
        all.push((&mut self.head, "head".to_string()));
        all
    }

    fn conv_params(&self) -> Vec<(&ConvParam, String)> {
        let mut all: Vec<(&ConvParam, String)> = Vec::new();
        for (i, conv) in self.stem.iter().enumerate() {
            all.push((conv, format!("stem.conv{}", i + 1)));
        }
        for (d, block) in self.downs.iter().enumerate() {
            for (i, conv) in block.iter().enumerate() {
                all.push((conv, format!("down{}.conv{}", d + 1, i + 1)));
            }
        }
        for (u, block) in self.ups.iter().enumerate() {
            all.push((&block.tconv, format!("up{}.tconv", u + 1)));
            for (i, conv) in block.convs.iter().enumerate() {
                all.push((conv, format!("up{}.conv{}", u + 1, i + 1)));
            }
        }
        all.push((&self.head, "head".to_string()));
        all
    }

    /// Ordered named arrays (weights and biases) with their gradients.
    pub fn arrays(&self) -> Vec<ParamView<'_>> {
        let mut views = Vec::new();
        for (conv, prefix) in self.conv_params() {
            views.push(ParamView {
                name: format!("{prefix}.weight"),
                dims: conv.weight.dims().to_vec(),
                value: conv.weight.data(),
                grad: conv.grad_weight.data(),
            });
            views.push(ParamView {
                name: format!("{prefix}.bias"),
                dims: vec![conv.bias.len()],
                value: &conv.bias,
                grad: &conv.grad_bias,
            });
        }
        views
    }

    /// Writes `values` into the named array; used by checkpoint loading.
    pub fn set_array(&mut self, name: &str, values: &[f64]) -> Result<()> {
        for (conv, prefix) in self.conv_params_mut() {
            if name == format!("{prefix}.weight") {
                if values.len() != conv.weight.len() {
                    return Err(Error::dimension(name, conv.weight.len(), values.len()));
                }
                conv.weight.data_mut().copy_from_slice(values);
                return Ok(());
            }
            if name == format!("{prefix}.bias") {
                if values.len() != conv.bias.len() {
                    return Err(Error::dimension(name, conv.bias.len(), values.len()));
                }
                conv.bias.copy_from_slice(values);
                return Ok(());
            }
        }
        Err(Error::Parameter(format!("unknown parameter array {name:?}")))
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.arrays().iter().map(|v| v.value.len()).sum()
    }

    /// `w -= lr * grad` on every array, then gradients are zeroed.
    pub fn sgd_step(&mut self, learning_rate: f64) {
        for (conv, _) in self.conv_params_mut() {
            conv.apply_sgd(learning_rate);
        }
    }

    pub fn zero_grads(&mut self) {
        for (conv, _) in self.conv_params_mut() {
            conv.grad_weight.fill(0.0);
            conv.grad_bias.fill(0.0);
        }
    }

    /// Order-sensitive FNV-1a hash of the raw parameter bits; used to assert
    /// that evaluation paths never mutate weights.
    pub fn value_checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for view in self.arrays() {
            for &v in view.value {
                for byte in v.to_bits().to_le_bytes() {
                    hash ^= byte as u64;
                    hash = hash.wrapping_mul(0x100_0000_01b3);
                }
            }
        }
        hash
    }
}

// (fan_in, fan_out) for a kernel shape. 3x3 and 1x1 kernels are
// (out, in, kh, kw); the 2x2 stride-2 transpose kernels are
// (in, out, kh, kw).
fn fans(dims: [usize; 4]) -> (usize, usize) {
    let area = dims[2] * dims[3];
    if dims[2] == 2 {
        (dims[0] * area, dims[1] * area)
    } else {
        (dims[1] * area, dims[0] * area)
    }
}

/// Closed-form parameter count for a configuration, summed over the block
/// schedule:
///
/// * stem: `(9 + 1)*base + (9*base + 1)*base`
/// * down block d with cin = base*2^(d-1), cout = 2*cin:
///   `(9*cin + 1)*cout + (9*cout + 1)*cout`
/// * up block u with cin = base*2^(depth-u), half = cin/2:
///   transpose `(4*cin + 1)*half`, then `(9*cin + 1)*half + (9*half + 1)*half`
/// * head: `base + 1`
pub fn param_count_for(config: &UNetConfig) -> usize {
    let base = config.base_channels;
    let mut total = 9 * base + base + 9 * base * base + base;
    for d in 1..=config.depth {
        let cin = base << (d - 1);
        let cout = base << d;
        total += 9 * cout * cin + cout + 9 * cout * cout + cout;
    }
    for u in 0..config.depth {
        let cin = base << (config.depth - u);
        let half = cin / 2;
        total += 4 * cin * half + half;
        total += 9 * half * cin + half + 9 * half * half + half;
    }
    total + base + 1
}

// Cached activations for one convolution + rectification stage.
#[derive(Debug)]
struct ConvCache {
    input: Tensor4,
    pre: Tensor4,
}

#[derive(Debug)]
struct DownCache {
    pool: PoolIndices,
    convs: [ConvCache; 2],
}

#[derive(Debug)]
struct UpCache {
    tconv_input: Tensor4,
    // Channel count of the upsampled half of the concatenation.
    up_channels: usize,
    convs: [ConvCache; 2],
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug)]
pub struct UNetCache {
    input_dims: [usize; 4],
    stem: [ConvCache; 2],
    downs: Vec<DownCache>,
    ups: Vec<UpCache>,
    head_input: Tensor4,
    head_pre: Tensor4,
}

fn conv_relu_forward(p: &ConvParam, input: &Tensor4) -> Result<(Tensor4, ConvCache)> {
    let pre = conv2d(input, &p.weight, &p.bias)?;
    let out = relu(&pre);
    Ok((
        out,
        ConvCache {
            input: input.clone(),
            pre,
        },
    ))
}

fn conv_relu_backward(p: &mut ConvParam, cache: &ConvCache, grad: &Tensor4) -> Result<Tensor4> {
    let grad_pre = relu_backward(&cache.pre, grad)?;
    let grads = conv2d_backward(&cache.input, &p.weight, &grad_pre)?;
    p.grad_weight = grads.kernel;
    p.grad_bias = grads.bias;
    Ok(grads.input)
}

/// Full forward pass. The input must be (batch, 1, s, s) with
/// `s = config.input_size`; the output has identical dims.
pub fn unet_forward(params: &UNetParams, input: &Tensor4) -> Result<(Tensor4, UNetCache)> {
    let config = &params.config;
    let [_, c, h, w] = input.dims();
    if c != 1 || h != config.input_size || w != config.input_size {
        return Err(Error::dimension(
            "unet input",
            format!("(_, 1, {0}, {0})", config.input_size),
            format!("{:?}", input.dims()),
        ));
    }

    let (x, stem1) = conv_relu_forward(&params.stem[0], input)?;
    let (mut x, stem2) = conv_relu_forward(&params.stem[1], &x)?;

    // Encoder; skips[d] feeds the mirror up block.
    let mut skips: Vec<Tensor4> = Vec::with_capacity(config.depth);
    let mut downs = Vec::with_capacity(config.depth);
    for block in &params.downs {
        skips.push(x.clone());
        let (pooled, pool) = maxpool2(&x)?;
        let (a, c1) = conv_relu_forward(&block[0], &pooled)?;
        let (b, c2) = conv_relu_forward(&block[1], &a)?;
        x = b;
        downs.push(DownCache {
            pool,
            convs: [c1, c2],
        });
    }

    // Decoder. The transpose output feeds the concatenation linearly;
    // rectification is paired with the two convolutions only.
    let mut ups = Vec::with_capacity(config.depth);
    for (u, block) in params.ups.iter().enumerate() {
        let tconv_input = x.clone();
        let up = convtranspose2(&x, &block.tconv.weight, &block.tconv.bias)?;
        let skip = &skips[config.depth - 1 - u];
        let cat = concat_channels(&up, skip)?;
        let (a, c1) = conv_relu_forward(&block.convs[0], &cat)?;
        let (b, c2) = conv_relu_forward(&block.convs[1], &a)?;
        let up_channels = up.dims()[1];
        x = b;
        ups.push(UpCache {
            tconv_input,
            up_channels,
            convs: [c1, c2],
        });
    }

    let head_input = x;
    let head_pre = conv1x1(&head_input, &params.head.weight, &params.head.bias)?;
    let output = relu(&head_pre);
    Ok((
        output,
        UNetCache {
            input_dims: input.dims(),
            stem: [stem1, stem2],
            downs,
            ups,
            head_input,
            head_pre,
        },
    ))
}

/// Full reverse pass: populates every gradient array in `params` and returns
/// the gradient with respect to the network input.
pub fn unet_backward(
    params: &mut UNetParams,
    cache: &UNetCache,
    grad_output: &Tensor4,
) -> Result<Tensor4> {
    let config = params.config;
    if grad_output.dims() != cache.input_dims {
        return Err(Error::dimension(
            "unet_backward grad",
            format!("{:?}", cache.input_dims),
            format!("{:?}", grad_output.dims()),
        ));
    }
    if cache.downs.len() != config.depth || cache.ups.len() != config.depth {
        return Err(Error::Parameter(
            "activation cache does not match this configuration".into(),
        ));
    }

    // Head.
    let grad_head_pre = relu_backward(&cache.head_pre, grad_output)?;
    let head_grads = conv1x1_backward(&cache.head_input, &params.head.weight, &grad_head_pre)?;
    params.head.grad_weight = head_grads.kernel;
    params.head.grad_bias = head_grads.bias;
    let mut grad = head_grads.input;

    // Decoder blocks in reverse; collect the gradient arriving at each skip.
    let mut skip_grads: Vec<Option<Tensor4>> = (0..config.depth).map(|_| None).collect();
    for (u, block) in params.ups.iter_mut().enumerate().rev() {
        let uc = &cache.ups[u];
        let g = conv_relu_backward(&mut block.convs[1], &uc.convs[1], &grad)?;
        let g = conv_relu_backward(&mut block.convs[0], &uc.convs[0], &g)?;
        let (g_up, g_skip) = split_channels(&g, uc.up_channels)?;
        skip_grads[config.depth - 1 - u] = Some(g_skip);
        let tgrads = convtranspose2_backward(&uc.tconv_input, &block.tconv.weight, &g_up)?;
        block.tconv.grad_weight = tgrads.kernel;
        block.tconv.grad_bias = tgrads.bias;
        grad = tgrads.input;
    }

    // Encoder blocks in reverse. The gradient reaching each skip tensor is
    // the sum of the pooled path and the skip path.
    for (d, block) in params.downs.iter_mut().enumerate().rev() {
        let dc = &cache.downs[d];
        let g = conv_relu_backward(&mut block[1], &dc.convs[1], &grad)?;
        let g = conv_relu_backward(&mut block[0], &dc.convs[0], &g)?;
        let mut g = maxpool2_backward(&dc.pool, &g)?;
        if let Some(skip) = skip_grads[d].take() {
            for (a, b) in g.data_mut().iter_mut().zip(skip.data()) {
                *a += b;
            }
        }
        grad = g;
    }

    let g = conv_relu_backward(&mut params.stem[1], &cache.stem[1], &grad)?;
    conv_relu_backward(&mut params.stem[0], &cache.stem[0], &g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(UNetConfig::new(64, 3, 8, 0).is_ok());
        assert!(UNetConfig::new(63, 3, 8, 0).is_err());
        assert!(UNetConfig::new(8, 0, 8, 0).is_err());
        assert!(UNetConfig::new(8, 4, 8, 0).is_err()); // 8 >> 4 == 0
        assert!(UNetConfig::new(8, 3, 0, 0).is_err());
    }

    #[test]
    fn paper_channel_schedule() {
        let config = UNetConfig::new(512, 7, 16, 0).unwrap();
        assert_eq!(
            config.encoder_channels(),
            vec![16, 32, 64, 128, 256, 512, 1024, 2048]
        );
        assert_eq!(config.bottleneck_size(), 4);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let config = UNetConfig::new(8, 1, 2, 0).unwrap();
        let params = UNetParams::zeroed(config).unwrap();
        let input = Tensor4::from_fn([2, 1, 8, 8], |_, _, y, x| (y * 8 + x) as f64 * 0.01);
        let (out, _) = unet_forward(&params, &input).unwrap();
        assert_eq!(out.dims(), [2, 1, 8, 8]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shape_matches_input_shape() {
        for (size, depth, base) in [(8usize, 1usize, 2usize), (16, 2, 4), (16, 4, 3)] {
            let config = UNetConfig::new(size, depth, base, 7).unwrap();
            let params = UNetParams::init(config).unwrap();
            let input = Tensor4::from_fn([3, 1, size, size], |b, _, y, x| {
                ((b + y + x) as f64 * 0.713).sin() * 0.2 + 0.3
            });
            let (out, _) = unet_forward(&params, &input).unwrap();
            assert_eq!(out.dims(), input.dims());
            assert!(out.data().iter().all(|&v| v >= 0.0), "head ReLU clamps");
        }
    }

    #[test]
    fn forward_rejects_wrong_input_size() {
        let config = UNetConfig::new(16, 2, 4, 7).unwrap();
        let params = UNetParams::init(config).unwrap();
        let input = Tensor4::zeros([1, 1, 8, 8]);
        assert!(unet_forward(&params, &input).is_err());
        let input = Tensor4::zeros([1, 2, 16, 16]);
        assert!(unet_forward(&params, &input).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let config = UNetConfig::new(16, 2, 4, 99).unwrap();
        let a = UNetParams::init(config).unwrap();
        let b = UNetParams::init(config).unwrap();
        for (va, vb) in a.arrays().iter().zip(b.arrays().iter()) {
            assert_eq!(va.name, vb.name);
            assert_eq!(va.value, vb.value);
        }
        for view in a.arrays() {
            if view.name.ends_with(".bias") {
                assert!(view.value.iter().all(|&v| v == 0.0));
            }
        }
        let c = UNetParams::init(UNetConfig::new(16, 2, 4, 100).unwrap()).unwrap();
        assert_ne!(
            a.arrays()[0].value,
            c.arrays()[0].value,
            "different seeds differ"
        );
    }

    #[test]
    fn init_variance_matches_uniform_law() {
        // For uniform(-b, b) the variance is b^2 / 3; check arrays with at
        // least 10^4 entries to within 20%.
        let config = UNetConfig::new(64, 3, 16, 5).unwrap();
        let params = UNetParams::init(config).unwrap();
        let mut checked = 0;
        for view in params.arrays() {
            if view.value.len() < 10_000 || view.dims.len() != 4 {
                continue;
            }
            let (fan_in, fan_out) = fans([view.dims[0], view.dims[1], view.dims[2], view.dims[3]]);
            let b = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let expected = b * b / 3.0;
            let mean = view.value.iter().sum::<f64>() / view.value.len() as f64;
            let var =
                view.value.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / view.value.len() as f64;
            assert!(
                (var - expected).abs() / expected < 0.2,
                "{}: var {var:.3e} vs {expected:.3e}",
                view.name
            );
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn param_count_closed_form_matches_allocation() {
        for (size, depth, base) in [(8usize, 1usize, 2usize), (16, 2, 4), (64, 3, 8)] {
            let config = UNetConfig::new(size, depth, base, 0).unwrap();
            let params = UNetParams::zeroed(config).unwrap();
            assert_eq!(params.param_count(), param_count_for(&config));
        }
    }

    #[test]
    fn paper_config_param_count_pinned() {
        let config = UNetConfig::new(512, 7, 16, 0).unwrap();
        assert_eq!(param_count_for(&config), 124_440_145);
    }

    #[test]
    fn sgd_step_applies_and_zeroes() {
        let config = UNetConfig::new(8, 1, 2, 3).unwrap();
        let mut params = UNetParams::init(config).unwrap();
        let w0 = params.stem[0].weight.data()[0];
        params.stem[0].grad_weight.data_mut()[0] = 2.0;
        params.sgd_step(0.1);
        assert!((params.stem[0].weight.data()[0] - (w0 - 0.2)).abs() < 1e-15);
        assert_eq!(params.stem[0].grad_weight.data()[0], 0.0);

        // lr = 0 leaves parameters unchanged.
        let before = params.value_checksum();
        params.stem[0].grad_weight.data_mut()[0] = 5.0;
        params.sgd_step(0.0);
        assert_eq!(params.value_checksum(), before);
    }

    #[test]
    fn quadratic_toy_objective_converges() {
        // Minimize (w - 3)^2 by the same update rule the network uses.
        let mut w = 0.0f64;
        for _ in 0..200 {
            let grad = 2.0 * (w - 3.0);
            w -= 0.1 * grad;
        }
        assert!((w - 3.0).abs() < 1e-6);
    }

    #[test]
    fn zero_output_gradient_zeroes_all_param_gradients() {
        let config = UNetConfig::new(16, 2, 4, 11).unwrap();
        let mut params = UNetParams::init(config).unwrap();
        let input = Tensor4::from_fn([1, 1, 16, 16], |_, _, y, x| ((y ^ x) as f64) * 0.03);
        let (out, cache) = unet_forward(&params, &input).unwrap();
        let zero_grad = Tensor4::zeros(out.dims());
        unet_backward(&mut params, &cache, &zero_grad).unwrap();
        for view in params.arrays() {
            assert!(view.grad.iter().all(|&g| g == 0.0), "{}", view.name);
        }
    }

    #[test]
    fn gradients_are_additive_over_batch() {
        let config = UNetConfig::new(8, 1, 2, 21).unwrap();
        let mut params = UNetParams::init(config).unwrap();
        let single = Tensor4::from_fn([1, 1, 8, 8], |_, _, y, x| ((y * 8 + x) as f64) * 0.01);
        let double = Tensor4::from_fn([2, 1, 8, 8], |_, _, y, x| ((y * 8 + x) as f64) * 0.01);

        let (out1, cache1) = unet_forward(&params, &single).unwrap();
        let g1 = Tensor4::from_fn(out1.dims(), |_, _, y, x| ((y + x) as f64) * 0.1 - 0.2);
        unet_backward(&mut params, &cache1, &g1).unwrap();
        let grads_single: Vec<Vec<f64>> =
            params.arrays().iter().map(|v| v.grad.to_vec()).collect();

        let (out2, cache2) = unet_forward(&params, &double).unwrap();
        let g2 = Tensor4::from_fn(out2.dims(), |_, _, y, x| ((y + x) as f64) * 0.1 - 0.2);
        unet_backward(&mut params, &cache2, &g2).unwrap();

        for (view, single_grad) in params.arrays().iter().zip(&grads_single) {
            for (a, b) in view.grad.iter().zip(single_grad) {
                assert!(
                    (a - 2.0 * b).abs() <= 1e-12 * b.abs().max(1.0),
                    "{}: {a} vs 2*{b}",
                    view.name
                );
            }
        }
    }

    #[test]
    fn backward_rejects_mismatched_grad() {
        let config = UNetConfig::new(8, 1, 2, 2).unwrap();
        let mut params = UNetParams::init(config).unwrap();
        let input = Tensor4::zeros([1, 1, 8, 8]);
        let (_, cache) = unet_forward(&params, &input).unwrap();
        let wrong = Tensor4::zeros([2, 1, 8, 8]);
        assert!(unet_backward(&mut params, &cache, &wrong).is_err());
    }

    #[test]
    fn set_array_rejects_unknown_names_and_bad_shapes() {
        let config = UNetConfig::new(8, 1, 2, 2).unwrap();
        let mut params = UNetParams::zeroed(config).unwrap();
        assert!(params.set_array("nope.weight", &[0.0]).is_err());
        assert!(params.set_array("stem.conv1.bias", &[0.0; 7]).is_err());
        assert!(params.set_array("stem.conv1.bias", &[1.0, 2.0]).is_ok());
        assert_eq!(params.stem[0].bias, vec![1.0, 2.0]);
    }
}
