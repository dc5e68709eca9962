//! Network layers with hand-written forward and backward passes.
//!
//! Convolutions are lowered to matrix products (im2col for the 3x3 case, a
//! gather/scatter pairing for the 2x2 stride-2 transpose) and dispatched to
//! a single-threaded GEMM, so one training step is bit-reproducible. Every
//! backward pass is validated against central finite differences in the
//! integration suite.

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Thin checked wrapper around the f64 GEMM:
/// `C = alpha * A(m x k) * B(k x n) + beta * C`, with explicit strides so
/// transposed views need no repacking.
#[allow(clippy::too_many_arguments)]
fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: isize, cs: isize| -> usize {
        ((rows as isize - 1) * rs + (cols as isize - 1) * cs) as usize
    };
    debug_assert!(span(m, k, rsa, csa) < a.len());
    debug_assert!(span(k, n, rsb, csb) < b.len());
    debug_assert!(span(m, n, rsc, csc) < c.len());
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Gradients of a convolution-like layer.
#[derive(Debug)]
pub struct ConvGrads {
    pub input: Tensor4,
    pub kernel: Tensor4,
    pub bias: Vec<f64>,
}

fn check_channels(context: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::dimension(
            format!("{context} input channels"),
            expected,
            actual,
        ));
    }
    Ok(())
}

fn check_dims(context: &str, expected: [usize; 4], actual: [usize; 4]) -> Result<()> {
    if expected != actual {
        return Err(Error::dimension(
            context,
            format!("{expected:?}"),
            format!("{actual:?}"),
        ));
    }
    Ok(())
}

// Lowers one sample (ci, h, w) to a (ci*9, h*w) matrix for the 3x3 pad-1
// convolution. `cols` must hold ci*9*h*w elements.
fn im2col_3x3(sample: &[f64], ci: usize, h: usize, w: usize, cols: &mut [f64]) {
    let hw = h * w;
    cols.fill(0.0);
    for c in 0..ci {
        let plane = &sample[c * hw..(c + 1) * hw];
        for ky in 0..3usize {
            let dy = ky as isize - 1;
            for kx in 0..3usize {
                let dx = kx as isize - 1;
                let row = &mut cols[(c * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    match dx {
                        0 => dst.copy_from_slice(src),
                        1 => dst[..w - 1].copy_from_slice(&src[1..]),
                        _ => dst[1..].copy_from_slice(&src[..w - 1]),
                    }
                }
            }
        }
    }
}

// Adjoint of `im2col_3x3`: scatter-adds a (ci*9, h*w) matrix back onto the
// sample gradient.
fn col2im_3x3(cols: &[f64], ci: usize, h: usize, w: usize, sample: &mut [f64]) {
    let hw = h * w;
    for c in 0..ci {
        let plane = &mut sample[c * hw..(c + 1) * hw];
        for ky in 0..3usize {
            let dy = ky as isize - 1;
            for kx in 0..3usize {
                let dx = kx as isize - 1;
                let row = &cols[(c * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..][..w];
                    let src = &row[y * w..][..w];
                    match dx {
                        0 => {
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                        1 => {
                            for (d, s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                                *d += s;
                            }
                        }
                        _ => {
                            for (d, s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 3x3 cross-correlation with zero padding 1 and stride 1, preserving the
/// spatial extents. `kernel` is (co, ci, 3, 3); `bias` has one entry per
/// output channel.
pub fn conv2d(input: &Tensor4, kernel: &Tensor4, bias: &[f64]) -> Result<Tensor4> {
    let [b, ci, h, w] = input.dims();
    let [co, kci, kh, kw] = kernel.dims();
    if (kh, kw) != (3, 3) {
        return Err(Error::Parameter(format!(
            "conv2d kernel must be 3x3, got {kh}x{kw}"
        )));
    }
    check_channels("conv2d", kci, ci)?;
    if bias.len() != co {
        return Err(Error::dimension("conv2d bias", co, bias.len()));
    }

    let hw = h * w;
    let mut out = Tensor4::zeros([b, co, h, w]);
    let mut cols = vec![0.0; ci * 9 * hw];
    for bi in 0..b {
        im2col_3x3(input.sample(bi), ci, h, w, &mut cols);
        let out_b = out.sample_mut(bi);
        dgemm(
            co,
            ci * 9,
            hw,
            1.0,
            kernel.data(),
            (ci * 9) as isize,
            1,
            &cols,
            hw as isize,
            1,
            0.0,
            out_b,
            hw as isize,
            1,
        );
        for (c, &bc) in bias.iter().enumerate() {
            for v in &mut out_b[c * hw..(c + 1) * hw] {
                *v += bc;
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, kernel, and bias.
pub fn conv2d_backward(
    input: &Tensor4,
    kernel: &Tensor4,
    grad_output: &Tensor4,
) -> Result<ConvGrads> {
    let [b, ci, h, w] = input.dims();
    let [co, kci, _, _] = kernel.dims();
    check_channels("conv2d_backward", kci, ci)?;
    check_dims("conv2d_backward grad", [b, co, h, w], grad_output.dims())?;

    let hw = h * w;
    let mut grad_input = Tensor4::zeros(input.dims());
    let mut grad_kernel = Tensor4::zeros(kernel.dims());
    let mut grad_bias = vec![0.0; co];
    let mut cols = vec![0.0; ci * 9 * hw];
    let mut dcols = vec![0.0; ci * 9 * hw];

    for bi in 0..b {
        let gout_b = grad_output.sample(bi);
        for c in 0..co {
            grad_bias[c] += gout_b[c * hw..(c + 1) * hw].iter().sum::<f64>();
        }

        // dK += gout_b (co x hw) * cols_b^T (hw x ci*9)
        im2col_3x3(input.sample(bi), ci, h, w, &mut cols);
        dgemm(
            co,
            hw,
            ci * 9,
            1.0,
            gout_b,
            hw as isize,
            1,
            &cols,
            1,
            hw as isize,
            1.0,
            grad_kernel.data_mut(),
            (ci * 9) as isize,
            1,
        );

        // dcols = K^T (ci*9 x co) * gout_b (co x hw), then scatter to dinput.
        dgemm(
            ci * 9,
            co,
            hw,
            1.0,
            kernel.data(),
            1,
            (ci * 9) as isize,
            gout_b,
            hw as isize,
            1,
            0.0,
            &mut dcols,
            hw as isize,
            1,
        );
        col2im_3x3(&dcols, ci, h, w, grad_input.sample_mut(bi));
    }

    Ok(ConvGrads {
        input: grad_input,
        kernel: grad_kernel,
        bias: grad_bias,
    })
}

/// 1x1 convolution (pure channel mixing), used by the output head.
pub fn conv1x1(input: &Tensor4, kernel: &Tensor4, bias: &[f64]) -> Result<Tensor4> {
    let [b, ci, h, w] = input.dims();
    let [co, kci, kh, kw] = kernel.dims();
    if (kh, kw) != (1, 1) {
        return Err(Error::Parameter(format!(
            "conv1x1 kernel must be 1x1, got {kh}x{kw}"
        )));
    }
    check_channels("conv1x1", kci, ci)?;
    if bias.len() != co {
        return Err(Error::dimension("conv1x1 bias", co, bias.len()));
    }

    let hw = h * w;
    let mut out = Tensor4::zeros([b, co, h, w]);
    for bi in 0..b {
        let out_b = out.sample_mut(bi);
        dgemm(
            co,
            ci,
            hw,
            1.0,
            kernel.data(),
            ci as isize,
            1,
            input.sample(bi),
            hw as isize,
            1,
            0.0,
            out_b,
            hw as isize,
            1,
        );
        for (c, &bc) in bias.iter().enumerate() {
            for v in &mut out_b[c * hw..(c + 1) * hw] {
                *v += bc;
            }
        }
    }
    Ok(out)
}

pub fn conv1x1_backward(
    input: &Tensor4,
    kernel: &Tensor4,
    grad_output: &Tensor4,
) -> Result<ConvGrads> {
    let [b, ci, h, w] = input.dims();
    let [co, kci, _, _] = kernel.dims();
    check_channels("conv1x1_backward", kci, ci)?;
    check_dims("conv1x1_backward grad", [b, co, h, w], grad_output.dims())?;

    let hw = h * w;
    let mut grad_input = Tensor4::zeros(input.dims());
    let mut grad_kernel = Tensor4::zeros(kernel.dims());
    let mut grad_bias = vec![0.0; co];

    for bi in 0..b {
        let gout_b = grad_output.sample(bi);
        for c in 0..co {
            grad_bias[c] += gout_b[c * hw..(c + 1) * hw].iter().sum::<f64>();
        }
        dgemm(
            co,
            hw,
            ci,
            1.0,
            gout_b,
            hw as isize,
            1,
            input.sample(bi),
            1,
            hw as isize,
            1.0,
            grad_kernel.data_mut(),
            ci as isize,
            1,
        );
        dgemm(
            ci,
            co,
            hw,
            1.0,
            kernel.data(),
            1,
            ci as isize,
            gout_b,
            hw as isize,
            1,
            0.0,
            grad_input.sample_mut(bi),
            hw as isize,
            1,
        );
    }

    Ok(ConvGrads {
        input: grad_input,
        kernel: grad_kernel,
        bias: grad_bias,
    })
}

/// Pointwise max(0, x).
pub fn relu(input: &Tensor4) -> Tensor4 {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Passes gradient where the pre-activation was strictly positive; the
/// subgradient at exactly zero is fixed to zero.
pub fn relu_backward(pre_activation: &Tensor4, grad_output: &Tensor4) -> Result<Tensor4> {
    check_dims("relu_backward", pre_activation.dims(), grad_output.dims())?;
    let mut out = grad_output.clone();
    for (g, &x) in out.data_mut().iter_mut().zip(pre_activation.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}

/// Argmax bookkeeping for [`maxpool2`]: the flat index into the input tensor
/// of each window maximum (first occurrence on ties).
#[derive(Clone, Debug)]
pub struct PoolIndices {
    input_dims: [usize; 4],
    indices: Vec<usize>,
}

impl PoolIndices {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// 2x2 max pooling with stride 2. Spatial extents must be even.
pub fn maxpool2(input: &Tensor4) -> Result<(Tensor4, PoolIndices)> {
    let [b, c, h, w] = input.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Parameter(format!(
            "maxpool2 needs even spatial extents, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros([b, c, oh, ow]);
    let mut indices = Vec::with_capacity(b * c * oh * ow);
    for bi in 0..b {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = input.offset(bi, ci, 2 * oy, 2 * ox);
                    let mut best_idx = base;
                    let mut best = input.data()[base];
                    for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                        let idx = base + dy * w + dx;
                        let v = input.data()[idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                    out.set(bi, ci, oy, ox, best);
                    indices.push(best_idx);
                }
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            input_dims: input.dims(),
            indices,
        },
    ))
}

/// Scatters gradients back to the recorded argmax positions.
pub fn maxpool2_backward(indices: &PoolIndices, grad_output: &Tensor4) -> Result<Tensor4> {
    let [b, c, h, w] = indices.input_dims;
    check_dims(
        "maxpool2_backward grad",
        [b, c, h / 2, w / 2],
        grad_output.dims(),
    )?;
    let mut grad_input = Tensor4::zeros(indices.input_dims);
    for (&idx, &g) in indices.indices.iter().zip(grad_output.data()) {
        grad_input.data_mut()[idx] += g;
    }
    Ok(grad_input)
}

/// Transposed convolution with a 2x2 kernel and stride 2: doubles the
/// spatial extents. `kernel` is (ci, co, 2, 2). Because the stride equals
/// the kernel size, output positions receive exactly one contribution.
pub fn convtranspose2(input: &Tensor4, kernel: &Tensor4, bias: &[f64]) -> Result<Tensor4> {
    let [b, ci, h, w] = input.dims();
    let [kci, co, kh, kw] = kernel.dims();
    if (kh, kw) != (2, 2) {
        return Err(Error::Parameter(format!(
            "convtranspose2 kernel must be 2x2, got {kh}x{kw}"
        )));
    }
    check_channels("convtranspose2", kci, ci)?;
    if bias.len() != co {
        return Err(Error::dimension("convtranspose2 bias", co, bias.len()));
    }

    let hw = h * w;
    let co4 = co * 4;
    let mut out = Tensor4::zeros([b, co, 2 * h, 2 * w]);
    let mut packed = vec![0.0; co4 * hw];
    for bi in 0..b {
        // packed (co*4 x hw) = K^T (co*4 x ci) * input_b (ci x hw)
        dgemm(
            co4,
            ci,
            hw,
            1.0,
            kernel.data(),
            1,
            co4 as isize,
            input.sample(bi),
            hw as isize,
            1,
            0.0,
            &mut packed,
            hw as isize,
            1,
        );
        let out_b = out.sample_mut(bi);
        let ow = 2 * w;
        for c in 0..co {
            let plane = &mut out_b[c * 4 * hw..(c + 1) * 4 * hw];
            for ky in 0..2usize {
                for kx in 0..2usize {
                    let row = &packed[(c * 4 + ky * 2 + kx) * hw..][..hw];
                    for y in 0..h {
                        for x in 0..w {
                            plane[(2 * y + ky) * ow + 2 * x + kx] = row[y * w + x] + bias[c];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn convtranspose2_backward(
    input: &Tensor4,
    kernel: &Tensor4,
    grad_output: &Tensor4,
) -> Result<ConvGrads> {
    let [b, ci, h, w] = input.dims();
    let [kci, co, _, _] = kernel.dims();
    check_channels("convtranspose2_backward", kci, ci)?;
    check_dims(
        "convtranspose2_backward grad",
        [b, co, 2 * h, 2 * w],
        grad_output.dims(),
    )?;

    let hw = h * w;
    let co4 = co * 4;
    let mut grad_input = Tensor4::zeros(input.dims());
    let mut grad_kernel = Tensor4::zeros(kernel.dims());
    let mut grad_bias = vec![0.0; co];
    let mut packed = vec![0.0; co4 * hw];

    for bi in 0..b {
        let gout_b = grad_output.sample(bi);
        let ow = 2 * w;
        for c in 0..co {
            let plane = &gout_b[c * 4 * hw..(c + 1) * 4 * hw];
            grad_bias[c] += plane.iter().sum::<f64>();
            for ky in 0..2usize {
                for kx in 0..2usize {
                    let row = &mut packed[(c * 4 + ky * 2 + kx) * hw..][..hw];
                    for y in 0..h {
                        for x in 0..w {
                            row[y * w + x] = plane[(2 * y + ky) * ow + 2 * x + kx];
                        }
                    }
                }
            }
        }

        // dinput_b (ci x hw) = K (ci x co*4) * packed (co*4 x hw)
        dgemm(
            ci,
            co4,
            hw,
            1.0,
            kernel.data(),
            co4 as isize,
            1,
            &packed,
            hw as isize,
            1,
            0.0,
            grad_input.sample_mut(bi),
            hw as isize,
            1,
        );

        // dK (ci x co*4) += input_b (ci x hw) * packed^T (hw x co*4)
        dgemm(
            ci,
            hw,
            co4,
            1.0,
            input.sample(bi),
            hw as isize,
            1,
            &packed,
            1,
            hw as isize,
            1.0,
            grad_kernel.data_mut(),
            co4 as isize,
            1,
        );
    }

    Ok(ConvGrads {
        input: grad_input,
        kernel: grad_kernel,
        bias: grad_bias,
    })
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat_channels(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    let [ba, ca, ha, wa] = a.dims();
    let [bb, cb, hb, wb] = b.dims();
    if (ba, ha, wa) != (bb, hb, wb) {
        return Err(Error::dimension(
            "concat_channels",
            format!("batch/spatial {:?}", [ba, ha, wa]),
            format!("{:?}", [bb, hb, wb]),
        ));
    }
    let mut out = Tensor4::zeros([ba, ca + cb, ha, wa]);
    let (plane_a, plane_b) = (ca * ha * wa, cb * hb * wb);
    for bi in 0..ba {
        let dst = out.sample_mut(bi);
        dst[..plane_a].copy_from_slice(a.sample(bi));
        dst[plane_a..].copy_from_slice(b.sample(bi));
    }
    Ok(out)
}

/// Splits a gradient at the recorded channel boundary; exact inverse of
/// [`concat_channels`].
pub fn split_channels(grad: &Tensor4, channels_a: usize) -> Result<(Tensor4, Tensor4)> {
    let [b, c, h, w] = grad.dims();
    if channels_a == 0 || channels_a >= c {
        return Err(Error::Parameter(format!(
            "split boundary {channels_a} outside 1..{c}"
        )));
    }
    let cb = c - channels_a;
    let mut ga = Tensor4::zeros([b, channels_a, h, w]);
    let mut gb = Tensor4::zeros([b, cb, h, w]);
    let plane_a = channels_a * h * w;
    for bi in 0..b {
        let src = grad.sample(bi);
        ga.sample_mut(bi).copy_from_slice(&src[..plane_a]);
        gb.sample_mut(bi).copy_from_slice(&src[plane_a..]);
    }
    Ok((ga, gb))
}

/// Mean-square error over all elements, with its gradient w.r.t. the
/// prediction: `(2 / count) * (p - t)`.
pub fn mse_loss(prediction: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4)> {
    check_dims("mse_loss", prediction.dims(), target.dims())?;
    let count = prediction.len() as f64;
    let mut grad = Tensor4::zeros(prediction.dims());
    let mut loss = 0.0;
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(prediction.data())
        .zip(target.data())
    {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / count;
    }
    Ok((loss / count, grad))
}
