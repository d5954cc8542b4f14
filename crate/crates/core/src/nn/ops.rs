//! Layer primitives with explicit forward and backward rules.
//!
//! Convolution uses cross-correlation semantics via im2col plus a matrix
//! product; every reduction accumulates in `f64`.

use super::scalar::Scalar;
use super::tensor::Tensor;
use super::NnError;

/// Spatial padding: `Same` keeps the input size at stride 1 by padding
/// `(k-1)/2` zeros per side (odd kernels only); `Valid` pads nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

fn pad_for(padding: Padding, k: usize) -> Result<usize, NnError> {
    match padding {
        Padding::Valid => Ok(0),
        Padding::Same => {
            if k % 2 == 0 {
                Err(NnError::ShapeMismatch(format!(
                    "same padding needs an odd kernel, got {k}"
                )))
            } else {
                Ok((k - 1) / 2)
            }
        }
    }
}

fn conv_out_dim(input: usize, k: usize, pad: usize, stride: usize) -> Result<usize, NnError> {
    let padded = input + 2 * pad;
    if padded < k {
        return Err(NnError::ShapeMismatch(format!(
            "input {input} smaller than kernel {k} under the requested padding"
        )));
    }
    Ok((padded - k) / stride + 1)
}

/// `out = a (m x k) * b (k x n)`, accumulated in f64.
fn matmul_f64<S: Scalar>(a: &[S], m: usize, k: usize, b: &[S], n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            let a_val = a_ik.to_f64();
            if a_val == 0.0 {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_val * bv.to_f64();
            }
        }
    }
}

/// `out = a (m x k) * b^T` where `b` is `(n x k)`, accumulated in f64.
fn matmul_abt_f64<S: Scalar>(a: &[S], m: usize, k: usize, b: &[S], n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f64;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av.to_f64() * bv.to_f64();
            }
            out[i * n + j] = acc;
        }
    }
}

struct ConvGeometry {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    pad_h: usize,
    pad_w: usize,
    stride: usize,
    out_h: usize,
    out_w: usize,
}

fn conv_geometry<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
    stride: usize,
    padding: Padding,
) -> Result<ConvGeometry, NnError> {
    let (batch, c_in, h, w) = input.dims4()?;
    let (c_out, wc_in, kh, kw) = weight.dims4()?;
    if wc_in != c_in {
        return Err(NnError::ShapeMismatch(format!(
            "weight expects {wc_in} input channels, input has {c_in}"
        )));
    }
    if bias.shape() != [c_out] {
        return Err(NnError::ShapeMismatch(format!(
            "bias shape {:?} vs {c_out} output channels",
            bias.shape()
        )));
    }
    if stride == 0 {
        return Err(NnError::ShapeMismatch("stride must be >= 1".into()));
    }
    let pad_h = pad_for(padding, kh)?;
    let pad_w = pad_for(padding, kw)?;
    Ok(ConvGeometry {
        batch,
        c_in,
        h,
        w,
        c_out,
        kh,
        kw,
        pad_h,
        pad_w,
        stride,
        out_h: conv_out_dim(h, kh, pad_h, stride)?,
        out_w: conv_out_dim(w, kw, pad_w, stride)?,
    })
}

fn im2col<S: Scalar>(input: &[S], g: &ConvGeometry, cols: &mut [S]) {
    let patch = g.c_in * g.kh * g.kw;
    let positions = g.out_h * g.out_w;
    debug_assert_eq!(cols.len(), patch * positions);
    debug_assert_eq!(input.len(), g.c_in * g.h * g.w);
    for ci in 0..g.c_in {
        let plane = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for kh in 0..g.kh {
            for kw in 0..g.kw {
                let row = (ci * g.kh + kh) * g.kw + kw;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oh in 0..g.out_h {
                    let ih = (oh * g.stride + kh) as isize - g.pad_h as isize;
                    let dst_row = &mut dst[oh * g.out_w..(oh + 1) * g.out_w];
                    if ih < 0 || ih >= g.h as isize {
                        dst_row.iter_mut().for_each(|v| *v = S::ZERO);
                        continue;
                    }
                    let src_row = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for (ow, dst_v) in dst_row.iter_mut().enumerate() {
                        let iw = (ow * g.stride + kw) as isize - g.pad_w as isize;
                        *dst_v = if iw < 0 || iw >= g.w as isize {
                            S::ZERO
                        } else {
                            src_row[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_accumulate(cols: &[f64], g: &ConvGeometry, out: &mut [f64]) {
    let positions = g.out_h * g.out_w;
    for ci in 0..g.c_in {
        let plane = &mut out[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for kh in 0..g.kh {
            for kw in 0..g.kw {
                let row = (ci * g.kh + kh) * g.kw + kw;
                let src = &cols[row * positions..(row + 1) * positions];
                for oh in 0..g.out_h {
                    let ih = (oh * g.stride + kh) as isize - g.pad_h as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    for ow in 0..g.out_w {
                        let iw = (ow * g.stride + kw) as isize - g.pad_w as isize;
                        if iw < 0 || iw >= g.w as isize {
                            continue;
                        }
                        plane[ih as usize * g.w + iw as usize] += src[oh * g.out_w + ow];
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation: `out[b,o,y,x] = bias[o] + sum w[o,c,i,j] * x[b,c,...]`.
pub fn conv2d<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<S>, NnError> {
    let g = conv_geometry(input, weight, bias, stride, padding)?;
    let patch = g.c_in * g.kh * g.kw;
    let positions = g.out_h * g.out_w;
    let mut cols = vec![S::ZERO; patch * positions];
    let mut acc = vec![0.0f64; g.c_out * positions];
    let mut out = vec![S::ZERO; g.batch * g.c_out * positions];
    let in_stride = g.c_in * g.h * g.w;
    for b in 0..g.batch {
        im2col(&input.data()[b * in_stride..(b + 1) * in_stride], &g, &mut cols);
        matmul_f64(weight.data(), g.c_out, patch, &cols, positions, &mut acc);
        let dst = &mut out[b * g.c_out * positions..(b + 1) * g.c_out * positions];
        for o in 0..g.c_out {
            let bias_v = bias.data()[o].to_f64();
            for pos in 0..positions {
                dst[o * positions + pos] = S::from_f64(acc[o * positions + pos] + bias_v);
            }
        }
    }
    Tensor::new(&[g.batch, g.c_out, g.out_h, g.out_w], out)
}

/// Gradients of [`conv2d`] w.r.t. input, weight, and bias.
pub fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    stride: usize,
    padding: Padding,
    grad_out: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>), NnError> {
    let bias_probe = Tensor::<S>::zeros(&[weight.shape()[0]]);
    let g = conv_geometry(input, weight, &bias_probe, stride, padding)?;
    let (gb_, go_c, go_h, go_w) = grad_out.dims4()?;
    if (gb_, go_c, go_h, go_w) != (g.batch, g.c_out, g.out_h, g.out_w) {
        return Err(NnError::ShapeMismatch(format!(
            "grad_out shape {:?} vs expected {:?}",
            grad_out.shape(),
            [g.batch, g.c_out, g.out_h, g.out_w]
        )));
    }
    let patch = g.c_in * g.kh * g.kw;
    let positions = g.out_h * g.out_w;
    let in_stride = g.c_in * g.h * g.w;
    let out_stride = g.c_out * positions;

    let mut cols = vec![S::ZERO; patch * positions];
    let mut grad_weight_acc = vec![0.0f64; g.c_out * patch];
    let mut grad_bias_acc = vec![0.0f64; g.c_out];
    let mut grad_cols = vec![0.0f64; patch * positions];
    let mut grad_input_acc = vec![0.0f64; g.batch * in_stride];
    let mut gw_batch = vec![0.0f64; g.c_out * patch];

    for b in 0..g.batch {
        let go = &grad_out.data()[b * out_stride..(b + 1) * out_stride];
        im2col(&input.data()[b * in_stride..(b + 1) * in_stride], &g, &mut cols);

        // grad_weight += grad_out (c_out x pos) * cols^T (pos x patch)
        matmul_abt_f64(go, g.c_out, positions, &cols, patch, &mut gw_batch);
        for (acc, v) in grad_weight_acc.iter_mut().zip(&gw_batch) {
            *acc += *v;
        }
        for o in 0..g.c_out {
            let mut acc = 0.0f64;
            for pos in 0..positions {
                acc += go[o * positions + pos].to_f64();
            }
            grad_bias_acc[o] += acc;
        }

        // grad_cols = weight^T (patch x c_out) * grad_out (c_out x pos)
        grad_cols.fill(0.0);
        for o in 0..g.c_out {
            let w_row = &weight.data()[o * patch..(o + 1) * patch];
            let go_row = &go[o * positions..(o + 1) * positions];
            for (r, &w_or) in w_row.iter().enumerate() {
                let w_val = w_or.to_f64();
                if w_val == 0.0 {
                    continue;
                }
                let dst = &mut grad_cols[r * positions..(r + 1) * positions];
                for (d, &gv) in dst.iter_mut().zip(go_row) {
                    *d += w_val * gv.to_f64();
                }
            }
        }
        col2im_accumulate(
            &grad_cols,
            &g,
            &mut grad_input_acc[b * in_stride..(b + 1) * in_stride],
        );
    }

    let grad_input = Tensor::new(
        input.shape(),
        grad_input_acc.iter().map(|&v| S::from_f64(v)).collect(),
    )?;
    let grad_weight = Tensor::new(
        weight.shape(),
        grad_weight_acc.iter().map(|&v| S::from_f64(v)).collect(),
    )?;
    let grad_bias = Tensor::new(
        &[g.c_out],
        grad_bias_acc.iter().map(|&v| S::from_f64(v)).collect(),
    )?;
    Ok((grad_input, grad_weight, grad_bias))
}

/// Elementwise `max(x, 0)`.
pub fn relu<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    let data = input
        .data()
        .iter()
        .map(|&v| if v > S::ZERO { v } else { S::ZERO })
        .collect();
    Tensor::new(input.shape(), data).expect("same shape")
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward<S: Scalar>(
    input: &Tensor<S>,
    grad_out: &Tensor<S>,
) -> Result<Tensor<S>, NnError> {
    if input.shape() != grad_out.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "relu backward {:?} vs {:?}",
            input.shape(),
            grad_out.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > S::ZERO { g } else { S::ZERO })
        .collect();
    Tensor::new(input.shape(), data)
}

/// Non-overlapping `k x k` mean pooling (stride = k); trailing rows/columns
/// that do not fill a window are dropped.
pub fn avg_pool2d<S: Scalar>(input: &Tensor<S>, k: usize) -> Result<Tensor<S>, NnError> {
    let (b, c, h, w) = input.dims4()?;
    if k == 0 || h < k || w < k {
        return Err(NnError::ShapeMismatch(format!(
            "pool window {k} too large for {h}x{w}"
        )));
    }
    let oh = h / k;
    let ow = w / k;
    let inv = 1.0 / (k * k) as f64;
    let mut out = vec![S::ZERO; b * c * oh * ow];
    for bc in 0..b * c {
        let plane = &input.data()[bc * h * w..(bc + 1) * h * w];
        let dst = &mut out[bc * oh * ow..(bc + 1) * oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0.0f64;
                for dy in 0..k {
                    for dx in 0..k {
                        acc += plane[(y * k + dy) * w + (x * k + dx)].to_f64();
                    }
                }
                dst[y * ow + x] = S::from_f64(acc * inv);
            }
        }
    }
    Tensor::new(&[b, c, oh, ow], out)
}

/// Spreads each pooled gradient uniformly over its source window.
pub fn avg_pool2d_backward<S: Scalar>(
    input_shape: &[usize],
    k: usize,
    grad_out: &Tensor<S>,
) -> Result<Tensor<S>, NnError> {
    let [b, c, h, w] = match input_shape {
        &[b, c, h, w] => [b, c, h, w],
        _ => {
            return Err(NnError::ShapeMismatch(format!(
                "expected 4 input dims, got {input_shape:?}"
            )))
        }
    };
    let (gb, gc, oh, ow) = grad_out.dims4()?;
    if (gb, gc) != (b, c) || oh != h / k || ow != w / k {
        return Err(NnError::ShapeMismatch("pool backward shape".into()));
    }
    let inv = 1.0 / (k * k) as f64;
    let mut out = vec![S::ZERO; b * c * h * w];
    for bc in 0..b * c {
        let src = &grad_out.data()[bc * oh * ow..(bc + 1) * oh * ow];
        let dst = &mut out[bc * h * w..(bc + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let v = S::from_f64(src[y * ow + x].to_f64() * inv);
                for dy in 0..k {
                    for dx in 0..k {
                        dst[(y * k + dy) * w + (x * k + dx)] = v;
                    }
                }
            }
        }
    }
    Tensor::new(input_shape, out)
}

/// Concatenates along the channel dimension; batch and spatial dims must
/// agree.
pub fn concat_channels<S: Scalar>(inputs: &[&Tensor<S>]) -> Result<Tensor<S>, NnError> {
    if inputs.is_empty() {
        return Err(NnError::ShapeMismatch("concat of nothing".into()));
    }
    let (b, _, h, w) = inputs[0].dims4()?;
    let mut total_c = 0usize;
    for t in inputs {
        let (tb, tc, th, tw) = t.dims4()?;
        if (tb, th, tw) != (b, h, w) {
            return Err(NnError::ShapeMismatch(format!(
                "concat operand {:?} vs ({b}, _, {h}, {w})",
                t.shape()
            )));
        }
        total_c += tc;
    }
    let mut out = vec![S::ZERO; b * total_c * h * w];
    let plane = h * w;
    for bi in 0..b {
        let mut c_off = 0usize;
        for t in inputs {
            let tc = t.shape()[1];
            let src = &t.data()[bi * tc * plane..(bi + 1) * tc * plane];
            let dst_start = (bi * total_c + c_off) * plane;
            out[dst_start..dst_start + tc * plane].copy_from_slice(src);
            c_off += tc;
        }
    }
    Tensor::new(&[b, total_c, h, w], out)
}

/// Splits the concatenated gradient back into per-input gradients.
pub fn concat_channels_backward<S: Scalar>(
    channel_counts: &[usize],
    grad_out: &Tensor<S>,
) -> Result<Vec<Tensor<S>>, NnError> {
    let (b, total_c, h, w) = grad_out.dims4()?;
    if channel_counts.iter().sum::<usize>() != total_c {
        return Err(NnError::ShapeMismatch(format!(
            "channel counts {channel_counts:?} vs total {total_c}"
        )));
    }
    let plane = h * w;
    let mut grads: Vec<Tensor<S>> = channel_counts
        .iter()
        .map(|&c| Tensor::zeros(&[b, c, h, w]))
        .collect();
    for bi in 0..b {
        let mut c_off = 0usize;
        for (gi, &c) in channel_counts.iter().enumerate() {
            let src_start = (bi * total_c + c_off) * plane;
            let dst_start = bi * c * plane;
            grads[gi].data_mut()[dst_start..dst_start + c * plane]
                .copy_from_slice(&grad_out.data()[src_start..src_start + c * plane]);
            c_off += c;
        }
    }
    Ok(grads)
}

/// Mean over the spatial dims: `(B, C, H, W) -> (B, C)`.
pub fn global_avg_pool<S: Scalar>(input: &Tensor<S>) -> Result<Tensor<S>, NnError> {
    let (b, c, h, w) = input.dims4()?;
    let plane = h * w;
    let inv = 1.0 / plane as f64;
    let mut out = vec![S::ZERO; b * c];
    for bc in 0..b * c {
        let mut acc = 0.0f64;
        for &v in &input.data()[bc * plane..(bc + 1) * plane] {
            acc += v.to_f64();
        }
        out[bc] = S::from_f64(acc * inv);
    }
    Tensor::new(&[b, c], out)
}

pub fn global_avg_pool_backward<S: Scalar>(
    input_shape: &[usize],
    grad_out: &Tensor<S>,
) -> Result<Tensor<S>, NnError> {
    let [b, c, h, w] = match input_shape {
        &[b, c, h, w] => [b, c, h, w],
        _ => {
            return Err(NnError::ShapeMismatch(format!(
                "expected 4 input dims, got {input_shape:?}"
            )))
        }
    };
    if grad_out.shape() != [b, c] {
        return Err(NnError::ShapeMismatch("gap backward shape".into()));
    }
    let plane = h * w;
    let inv = 1.0 / plane as f64;
    let mut out = vec![S::ZERO; b * c * plane];
    for bc in 0..b * c {
        let v = S::from_f64(grad_out.data()[bc].to_f64() * inv);
        out[bc * plane..(bc + 1) * plane].iter_mut().for_each(|x| *x = v);
    }
    Tensor::new(input_shape, out)
}

/// Fully connected layer: `(B, F) x (O, F)^T + bias -> (B, O)`.
pub fn linear<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<Tensor<S>, NnError> {
    let (b, f) = input.dims2()?;
    let (o, wf) = weight.dims2()?;
    if wf != f || bias.shape() != [o] {
        return Err(NnError::ShapeMismatch(format!(
            "linear {:?} x {:?} + {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let mut acc = vec![0.0f64; b * o];
    matmul_abt_f64(input.data(), b, f, weight.data(), o, &mut acc);
    let out = acc
        .iter()
        .enumerate()
        .map(|(i, &v)| S::from_f64(v + bias.data()[i % o].to_f64()))
        .collect();
    Tensor::new(&[b, o], out)
}

pub fn linear_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    grad_out: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>), NnError> {
    let (b, f) = input.dims2()?;
    let (o, _) = weight.dims2()?;
    if grad_out.shape() != [b, o] {
        return Err(NnError::ShapeMismatch("linear backward shape".into()));
    }
    // grad_input = grad_out (b x o) * weight (o x f)
    let mut gx = vec![0.0f64; b * f];
    matmul_f64(grad_out.data(), b, o, weight.data(), f, &mut gx);
    // grad_weight[o_, f_] = sum_b grad_out[b_, o_] * input[b_, f_]
    let mut gw = vec![0.0f64; o * f];
    for bi in 0..b {
        let x_row = &input.data()[bi * f..(bi + 1) * f];
        let g_row = &grad_out.data()[bi * o..(bi + 1) * o];
        for (oi, &g) in g_row.iter().enumerate() {
            let gv = g.to_f64();
            if gv == 0.0 {
                continue;
            }
            let dst = &mut gw[oi * f..(oi + 1) * f];
            for (d, &x) in dst.iter_mut().zip(x_row) {
                *d += gv * x.to_f64();
            }
        }
    }
    let mut gb = vec![0.0f64; o];
    for bi in 0..b {
        for (oi, g) in gb.iter_mut().enumerate() {
            *g += grad_out.data()[bi * o + oi].to_f64();
        }
    }
    Ok((
        Tensor::new(&[b, f], gx.iter().map(|&v| S::from_f64(v)).collect())?,
        Tensor::new(&[o, f], gw.iter().map(|&v| S::from_f64(v)).collect())?,
        Tensor::new(&[o], gb.iter().map(|&v| S::from_f64(v)).collect())?,
    ))
}

/// Row-wise softmax with max-subtraction, computed in f64.
pub fn softmax<S: Scalar>(logits: &Tensor<S>) -> Result<Tensor<S>, NnError> {
    let (b, c) = logits.dims2()?;
    let mut out = vec![S::ZERO; b * c];
    for bi in 0..b {
        let row = &logits.data()[bi * c..(bi + 1) * c];
        let max = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.to_f64() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (j, e) in exps.iter().enumerate() {
            out[bi * c + j] = S::from_f64(e / sum);
        }
    }
    Tensor::new(&[b, c], out)
}

/// Mean negative log-likelihood of the labeled class under the softmax,
/// with its gradient `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
) -> Result<(f64, Tensor<S>), NnError> {
    let (b, c) = logits.dims2()?;
    if labels.len() != b {
        return Err(NnError::ShapeMismatch(format!(
            "{} labels for batch of {b}",
            labels.len()
        )));
    }
    let mut grad = vec![S::ZERO; b * c];
    let mut loss = 0.0f64;
    let inv_b = 1.0 / b as f64;
    for (bi, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(NnError::LabelOutOfRange {
                label,
                n_classes: c,
            });
        }
        let row = &logits.data()[bi * c..(bi + 1) * c];
        let max = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.to_f64() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss -= (row[label].to_f64() - max - sum.ln()) * inv_b;
        for (j, e) in exps.iter().enumerate() {
            let p = e / sum;
            let target = if j == label { 1.0 } else { 0.0 };
            grad[bi * c + j] = S::from_f64((p - target) * inv_b);
        }
    }
    Ok((loss, Tensor::new(&[b, c], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::new(shape, data).unwrap()
    }

    /// Nested-loop convolution oracle.
    fn conv_oracle(
        input: &Tensor<f64>,
        weight: &Tensor<f64>,
        bias: &Tensor<f64>,
        stride: usize,
        pad: usize,
    ) -> Tensor<f64> {
        let (b, c_in, h, w) = input.dims4().unwrap();
        let (c_out, _, kh, kw) = weight.dims4().unwrap();
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let mut out = Tensor::zeros(&[b, c_out, oh, ow]);
        for bi in 0..b {
            for o in 0..c_out {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = bias.data()[o];
                        for ci in 0..c_in {
                            for dy in 0..kh {
                                for dx in 0..kw {
                                    let iy = (y * stride + dy) as isize - pad as isize;
                                    let ix = (x * stride + dx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let iv = input.data()
                                        [((bi * c_in + ci) * h + iy as usize) * w + ix as usize];
                                    let wv =
                                        weight.data()[((o * c_in + ci) * kh + dy) * kw + dx];
                                    acc += iv * wv;
                                }
                            }
                        }
                        out.data_mut()[((bi * c_out + o) * oh + y) * ow + x] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random_tensor(&mut rng, &[2, 3, 5, 7]);
        let weight = Tensor::new(
            &[3, 3, 1, 1],
            (0..9)
                .map(|i| if i % 4 == 0 { 1.0 } else { 0.0 })
                .collect(),
        )
        .unwrap(); // identity mapping channel-wise
        let bias = Tensor::zeros(&[3]);
        let out = conv2d(&input, &weight, &bias, 1, Padding::Same).unwrap();
        for (a, b) in out.data().iter().zip(input.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_all_ones_on_constant_input() {
        let c = 3.5f64;
        let input = Tensor::new(&[1, 1, 6, 6], vec![c; 36]).unwrap();
        let weight = Tensor::new(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &weight, &bias, 1, Padding::Same).unwrap();
        // interior positions see the full 3x3 support
        for y in 1..5 {
            for x in 1..5 {
                assert!((out.data()[y * 6 + x] - 9.0 * c).abs() < 1e-12);
            }
        }
        // corners see only 2x2
        assert!((out.data()[0] - 4.0 * c).abs() < 1e-12);
    }

    #[test]
    fn conv_matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (stride, padding, pad) in [
            (1usize, Padding::Same, 1usize),
            (2, Padding::Same, 1),
            (1, Padding::Valid, 0),
        ] {
            let input = random_tensor(&mut rng, &[2, 3, 8, 9]);
            let weight = random_tensor(&mut rng, &[4, 3, 3, 3]);
            let bias = random_tensor(&mut rng, &[4]);
            let fast = conv2d(&input, &weight, &bias, stride, padding).unwrap();
            let slow = conv_oracle(&input, &weight, &bias, stride, pad);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-5 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn conv_shape_errors() {
        let input = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let weight = Tensor::<f64>::zeros(&[3, 3, 3, 3]); // wrong c_in
        let bias = Tensor::<f64>::zeros(&[3]);
        assert!(conv2d(&input, &weight, &bias, 1, Padding::Same).is_err());
        let weight = Tensor::<f64>::zeros(&[3, 2, 5, 5]);
        assert!(conv2d(&input, &weight, &bias, 1, Padding::Valid).is_err()); // kernel > input
    }

    /// Central-difference gradient of a scalar projection loss
    /// `L = sum(out * r)` for any differentiable op.
    fn fd_grad(mut eval: impl FnMut(&[f64]) -> f64, theta: &[f64], eps: f64) -> Vec<f64> {
        let mut grad = vec![0.0; theta.len()];
        let mut work = theta.to_vec();
        for i in 0..theta.len() {
            work[i] = theta[i] + eps;
            let plus = eval(&work);
            work[i] = theta[i] - eps;
            let minus = eval(&work);
            work[i] = theta[i];
            grad[i] = (plus - minus) / (2.0 * eps);
        }
        grad
    }

    fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| {
                let denom = a.abs().max(n.abs());
                if denom < 1e-10 {
                    0.0
                } else {
                    (a - n).abs() / denom
                }
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (stride, padding) in [(1usize, Padding::Same), (2, Padding::Same), (1, Padding::Valid)]
        {
            let input = random_tensor(&mut rng, &[2, 2, 6, 5]);
            let weight = random_tensor(&mut rng, &[3, 2, 3, 3]);
            let bias = random_tensor(&mut rng, &[3]);
            let out = conv2d(&input, &weight, &bias, stride, padding).unwrap();
            let r = random_tensor(&mut rng, out.shape());
            let grad_out = r.clone();
            let (gx, gw, gb) =
                conv2d_backward(&input, &weight, stride, padding, &grad_out).unwrap();

            let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
                conv2d(x, w, b, stride, padding)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(r.data())
                    .map(|(o, rv)| o * rv)
                    .sum()
            };
            let eps = 1e-5;
            let num_x = fd_grad(
                |d| loss(&Tensor::new(input.shape(), d.to_vec()).unwrap(), &weight, &bias),
                input.data(),
                eps,
            );
            assert!(max_rel_err(gx.data(), &num_x) < 1e-6);
            let num_w = fd_grad(
                |d| loss(&input, &Tensor::new(weight.shape(), d.to_vec()).unwrap(), &bias),
                weight.data(),
                eps,
            );
            assert!(max_rel_err(gw.data(), &num_w) < 1e-6);
            let num_b = fd_grad(
                |d| loss(&input, &weight, &Tensor::new(bias.shape(), d.to_vec()).unwrap()),
                bias.data(),
                eps,
            );
            assert!(max_rel_err(gb.data(), &num_b) < 1e-6);
        }
    }

    #[test]
    fn relu_values_and_gradient() {
        let x = Tensor::new(&[1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = relu(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&x, &Tensor::new(&[1, 3], vec![5.0, 5.0, 5.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn avg_pool_forward_and_backward() {
        let x = Tensor::new(&[1, 1, 2, 4], vec![1.0, 3.0, 5.0, 7.0, 2.0, 4.0, 6.0, 8.0]).unwrap();
        let y = avg_pool2d(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 2]);
        assert_eq!(y.data(), &[2.5, 6.5]);
        let g = avg_pool2d_backward(x.shape(), 2, &Tensor::new(&[1, 1, 1, 2], vec![4.0, 8.0]).unwrap())
            .unwrap();
        assert_eq!(g.data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn global_avg_pool_of_constant_plane() {
        let x = Tensor::<f64>::new(&[1, 2, 3, 3], vec![4.0; 18]).unwrap();
        let y = global_avg_pool(&x).unwrap();
        assert_eq!(y.shape(), &[1, 2]);
        assert!((y.data()[0] - 4.0).abs() < 1e-12);
        let g = global_avg_pool_backward(
            x.shape(),
            &Tensor::<f64>::new(&[1, 2], vec![9.0, 18.0]).unwrap(),
        )
        .unwrap();
        assert!((g.data()[0] - 1.0).abs() < 1e-12);
        assert!((g.data()[9] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn concat_and_split_are_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_tensor(&mut rng, &[2, 3, 4, 4]);
        let b = random_tensor(&mut rng, &[2, 5, 4, 4]);
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[2, 8, 4, 4]);
        let parts = concat_channels_backward(&[3, 5], &cat).unwrap();
        assert_eq!(parts[0].data(), a.data());
        assert_eq!(parts[1].data(), b.data());
        // mismatched spatial dims are rejected
        let c = random_tensor(&mut rng, &[2, 1, 5, 4]);
        assert!(concat_channels(&[&a, &c]).is_err());
    }

    #[test]
    fn linear_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(&mut rng, &[3, 4]);
        let w = random_tensor(&mut rng, &[2, 4]);
        let b = random_tensor(&mut rng, &[2]);
        let r = random_tensor(&mut rng, &[3, 2]);
        let (gx, gw, gb) = linear_backward(&x, &w, &r).unwrap();
        let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
            linear(x, w, b)
                .unwrap()
                .data()
                .iter()
                .zip(r.data())
                .map(|(o, rv)| o * rv)
                .sum()
        };
        let eps = 1e-6;
        let num_x = fd_grad(
            |d| loss(&Tensor::new(x.shape(), d.to_vec()).unwrap(), &w, &b),
            x.data(),
            eps,
        );
        assert!(max_rel_err(gx.data(), &num_x) < 1e-6);
        let num_w = fd_grad(
            |d| loss(&x, &Tensor::new(w.shape(), d.to_vec()).unwrap(), &b),
            w.data(),
            eps,
        );
        assert!(max_rel_err(gw.data(), &num_w) < 1e-6);
        let num_b = fd_grad(
            |d| loss(&x, &w, &Tensor::new(b.shape(), d.to_vec()).unwrap()),
            b.data(),
            eps,
        );
        assert!(max_rel_err(gb.data(), &num_b) < 1e-6);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let logits = random_tensor(&mut rng, &[5, 7]);
        let s = softmax(&logits).unwrap();
        for bi in 0..5 {
            let sum: f64 = s.data()[bi * 7..(bi + 1) * 7].iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn uniform_logits_give_ln7_loss() {
        let logits = Tensor::new(&[2, 7], vec![0.3; 14]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 6]).unwrap();
        assert!((loss - (7.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn large_margin_drives_loss_to_zero() {
        let mut data = vec![0.0f64; 7];
        data[2] = 60.0;
        let logits = Tensor::new(&[1, 7], data).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[2]).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let logits = random_tensor(&mut rng, &[4, 7]);
        let labels = [1usize, 0, 6, 3];
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        let num = fd_grad(
            |d| {
                softmax_cross_entropy(&Tensor::new(&[4, 7], d.to_vec()).unwrap(), &labels)
                    .unwrap()
                    .0
            },
            logits.data(),
            1e-6,
        );
        assert!(max_rel_err(grad.data(), &num) < 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        let logits = Tensor::<f64>::zeros(&[1, 7]);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[7]),
            Err(NnError::LabelOutOfRange { .. })
        ));
    }
}
