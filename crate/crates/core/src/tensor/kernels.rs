//! Raw array kernels shared by forward and backward passes.
//!
//! All loops are written saxpy-style over contiguous rows so the compiler
//! can vectorize the fused float work; batching happens outside the engine.

use super::{Scalar, Tensor, TensorError};

/// Dot product with four fixed accumulators. Plain `acc += x*y` loops are
/// serial under strict float semantics; the fixed split keeps results
/// deterministic while letting the lanes run independently.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let mut chunks_a = a.chunks_exact(4);
    let mut chunks_b = b.chunks_exact(4);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut tail = T::zero();
    for (&x, &y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (m, k) = dims2(a, "matmul lhs")?;
    let (k2, n) = dims2(b, "matmul rhs")?;
    if k != k2 {
        return Err(TensorError::ShapeMismatch {
            context: "matmul inner dimensions",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    let (ad, bd, od) = (a.data(), b.data(), out.data_mut());
    for i in 0..m {
        let out_row = &mut od[i * n..(i + 1) * n];
        for (kk, &av) in ad[i * k..(i + 1) * k].iter().enumerate() {
            let b_row = &bd[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `a × bᵀ` for `a: [m,k]`, `b: [n,k]`.
pub fn matmul_bt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (m, k) = dims2(a, "matmul_bt lhs")?;
    let (n, k2) = dims2(b, "matmul_bt rhs")?;
    if k != k2 {
        return Err(TensorError::ShapeMismatch {
            context: "matmul_bt inner dimensions",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    let (ad, bd, od) = (a.data(), b.data(), out.data_mut());
    for i in 0..m {
        let a_row = &ad[i * k..(i + 1) * k];
        let out_row = &mut od[i * n..(i + 1) * n];
        for (j, o) in out_row.iter_mut().enumerate() {
            *o = dot(a_row, &bd[j * k..(j + 1) * k]);
        }
    }
    Ok(out)
}

/// `aᵀ × b` for `a: [k,m]`, `b: [k,n]`.
pub fn matmul_at<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (k, m) = dims2(a, "matmul_at lhs")?;
    let (k2, n) = dims2(b, "matmul_at rhs")?;
    if k != k2 {
        return Err(TensorError::ShapeMismatch {
            context: "matmul_at inner dimensions",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    let (ad, bd, od) = (a.data(), b.data(), out.data_mut());
    for kk in 0..k {
        let b_row = &bd[kk * n..(kk + 1) * n];
        for (i, &av) in ad[kk * m..(kk + 1) * m].iter().enumerate() {
            let out_row = &mut od[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

pub fn transpose2d<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (m, n) = dims2(x, "transpose")?;
    let xd = x.data();
    let mut out = Tensor::zeros(&[n, m]);
    let od = out.data_mut();
    for i in 0..m {
        for j in 0..n {
            od[j * m + i] = xd[i * n + j];
        }
    }
    Ok(out)
}

/// Output spatial extent of a convolution along one axis.
pub fn conv_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if kernel == 0 || stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct ConvDims {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn conv_dims<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<ConvDims, TensorError> {
    let xs = x.shape();
    let ks = k.shape();
    if xs.len() != 3 || ks.len() != 4 || xs[0] != ks[1] {
        return Err(TensorError::ShapeMismatch {
            context: "conv2d expects x[c_in,h,w] and k[c_out,c_in,kh,kw]",
            lhs: xs.to_vec(),
            rhs: ks.to_vec(),
        });
    }
    let (oh, ow) = match (
        conv_extent(xs[1], ks[2], stride, pad),
        conv_extent(xs[2], ks[3], stride, pad),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(TensorError::NonPositiveOutput { input: xs.to_vec(), kernel: ks.to_vec() })
        }
    };
    Ok(ConvDims { c_in: xs[0], h: xs[1], w: xs[2], c_out: ks[0], kh: ks[2], kw: ks[3], oh, ow })
}

/// Range of output positions whose input index `o*stride + k - pad` lands in
/// `[0, extent)`.
fn valid_out_range(out_extent: usize, extent: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let hi_excl = (extent + pad).saturating_sub(k).div_ceil(stride).min(out_extent);
    (lo.min(hi_excl), hi_excl)
}

/// Cross-correlation convolution.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, TensorError> {
    let d = conv_dims(x, k, stride, pad)?;
    let mut out = Tensor::zeros(&[d.c_out, d.oh, d.ow]);
    let (xd, kd, od) = (x.data(), k.data(), out.data_mut());
    for co in 0..d.c_out {
        let out_plane = &mut od[co * d.oh * d.ow..(co + 1) * d.oh * d.ow];
        for ci in 0..d.c_in {
            let x_plane = &xd[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for ky in 0..d.kh {
                let (oy_lo, oy_hi) = valid_out_range(d.oh, d.h, ky, stride, pad);
                for kx in 0..d.kw {
                    let weight = kd[((co * d.c_in + ci) * d.kh + ky) * d.kw + kx];
                    let (ox_lo, ox_hi) = valid_out_range(d.ow, d.w, kx, stride, pad);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - pad;
                        let x_row = &x_plane[iy * d.w..(iy + 1) * d.w];
                        let out_row = &mut out_plane[oy * d.ow..(oy + 1) * d.ow];
                        let mut ix = ox_lo * stride + kx - pad;
                        for o in &mut out_row[ox_lo..ox_hi] {
                            *o += weight * x_row[ix];
                            ix += stride;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of `conv2d` with respect to the input.
pub fn conv2d_grad_x<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, TensorError> {
    let d = conv_dims(x, k, stride, pad)?;
    let mut grad = Tensor::zeros(x.shape());
    let (kd, gd, od) = (k.data(), grad.data_mut(), grad_out.data());
    for co in 0..d.c_out {
        let out_plane = &od[co * d.oh * d.ow..(co + 1) * d.oh * d.ow];
        for ci in 0..d.c_in {
            let grad_plane = &mut gd[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for ky in 0..d.kh {
                let (oy_lo, oy_hi) = valid_out_range(d.oh, d.h, ky, stride, pad);
                for kx in 0..d.kw {
                    let weight = kd[((co * d.c_in + ci) * d.kh + ky) * d.kw + kx];
                    let (ox_lo, ox_hi) = valid_out_range(d.ow, d.w, kx, stride, pad);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - pad;
                        let grad_row = &mut grad_plane[iy * d.w..(iy + 1) * d.w];
                        let out_row = &out_plane[oy * d.ow..(oy + 1) * d.ow];
                        let mut ix = ox_lo * stride + kx - pad;
                        for &g in &out_row[ox_lo..ox_hi] {
                            grad_row[ix] += weight * g;
                            ix += stride;
                        }
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// Gradient of `conv2d` with respect to the kernel.
pub fn conv2d_grad_k<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, TensorError> {
    let d = conv_dims(x, k, stride, pad)?;
    let mut grad = Tensor::zeros(k.shape());
    let (xd, gd, od) = (x.data(), grad.data_mut(), grad_out.data());
    for co in 0..d.c_out {
        let out_plane = &od[co * d.oh * d.ow..(co + 1) * d.oh * d.ow];
        for ci in 0..d.c_in {
            let x_plane = &xd[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for ky in 0..d.kh {
                let (oy_lo, oy_hi) = valid_out_range(d.oh, d.h, ky, stride, pad);
                for kx in 0..d.kw {
                    let (ox_lo, ox_hi) = valid_out_range(d.ow, d.w, kx, stride, pad);
                    let mut acc = T::zero();
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - pad;
                        let x_row = &x_plane[iy * d.w..(iy + 1) * d.w];
                        let out_row = &out_plane[oy * d.ow..(oy + 1) * d.ow];
                        if stride == 1 {
                            let ix0 = ox_lo + kx - pad;
                            acc += dot(&out_row[ox_lo..ox_hi], &x_row[ix0..ix0 + (ox_hi - ox_lo)]);
                        } else {
                            let mut ix = ox_lo * stride + kx - pad;
                            for &g in &out_row[ox_lo..ox_hi] {
                                acc += g * x_row[ix];
                                ix += stride;
                            }
                        }
                    }
                    gd[((co * d.c_in + ci) * d.kh + ky) * d.kw + kx] = acc;
                }
            }
        }
    }
    Ok(grad)
}

/// Lane geometry for reductions along one axis.
pub struct AxisLanes {
    pub outer: usize,
    pub lane: usize,
    pub inner: usize,
}

pub fn axis_lanes(shape: &[usize], axis: usize) -> Result<AxisLanes, TensorError> {
    if axis >= shape.len() {
        return Err(TensorError::IndexOutOfRange { index: axis, extent: shape.len() });
    }
    Ok(AxisLanes {
        outer: shape[..axis].iter().product(),
        lane: shape[axis],
        inner: shape[axis + 1..].iter().product(),
    })
}

/// Numerically stable softmax along `axis` (max subtraction per lane).
pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>, TensorError> {
    let lanes = axis_lanes(x.shape(), axis)?;
    let mut out = Tensor::zeros(x.shape());
    let (xd, od) = (x.data(), out.data_mut());
    for o in 0..lanes.outer {
        for i in 0..lanes.inner {
            let base = o * lanes.lane * lanes.inner + i;
            let idx = |l: usize| base + l * lanes.inner;
            let mut max = xd[idx(0)];
            for l in 1..lanes.lane {
                max = max.max(xd[idx(l)]);
            }
            let mut sum = T::zero();
            for l in 0..lanes.lane {
                let e = (xd[idx(l)] - max).exp();
                od[idx(l)] = e;
                sum += e;
            }
            let inv = T::one() / sum;
            for l in 0..lanes.lane {
                od[idx(l)] *= inv;
            }
        }
    }
    Ok(out)
}

/// Backward of softmax given its output `y`: `dx = y ⊙ (dy − Σ dy⊙y)`.
pub fn softmax_grad<T: Scalar>(
    y: &Tensor<T>,
    grad_out: &Tensor<T>,
    axis: usize,
) -> Result<Tensor<T>, TensorError> {
    let lanes = axis_lanes(y.shape(), axis)?;
    let mut grad = Tensor::zeros(y.shape());
    let (yd, gd, od) = (y.data(), grad_out.data(), grad.data_mut());
    for o in 0..lanes.outer {
        for i in 0..lanes.inner {
            let base = o * lanes.lane * lanes.inner + i;
            let idx = |l: usize| base + l * lanes.inner;
            let mut dot = T::zero();
            for l in 0..lanes.lane {
                dot += gd[idx(l)] * yd[idx(l)];
            }
            for l in 0..lanes.lane {
                od[idx(l)] = yd[idx(l)] * (gd[idx(l)] - dot);
            }
        }
    }
    Ok(grad)
}

/// Layer normalization over the last axis with learned gain/bias of that
/// extent. Returns the output tensor.
pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>, TensorError> {
    let n = *x.shape().last().ok_or(TensorError::InvalidShape {
        shape: vec![],
        reason: "layer_norm needs rank >= 1",
    })?;
    if gain.shape() != [n] || bias.shape() != [n] {
        return Err(TensorError::ShapeMismatch {
            context: "layer_norm gain/bias extent",
            lhs: x.shape().to_vec(),
            rhs: gain.shape().to_vec(),
        });
    }
    let rows = x.len() / n;
    let mut out = Tensor::zeros(x.shape());
    let (xd, gd, bd, od) = (x.data(), gain.data(), bias.data(), out.data_mut());
    let inv_n = T::from_f64(1.0 / n as f64);
    let eps = T::from_f64(eps);
    for r in 0..rows {
        let row = &xd[r * n..(r + 1) * n];
        let out_row = &mut od[r * n..(r + 1) * n];
        let mut mean = T::zero();
        for &v in row {
            mean += v;
        }
        mean *= inv_n;
        let mut var = T::zero();
        for &v in row {
            let d = v - mean;
            var += d * d;
        }
        var *= inv_n;
        let inv_std = T::one() / (var + eps).sqrt();
        for j in 0..n {
            out_row[j] = (row[j] - mean) * inv_std * gd[j] + bd[j];
        }
    }
    Ok(out)
}

/// Backward of layer_norm; returns (dx, dgain, dbias).
pub fn layer_norm_grad<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    grad_out: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), TensorError> {
    let n = *x.shape().last().expect("validated in forward");
    let rows = x.len() / n;
    let mut dx = Tensor::zeros(x.shape());
    let mut dgain = Tensor::zeros(&[n]);
    let mut dbias = Tensor::zeros(&[n]);
    let (xd, gd, od) = (x.data(), gain.data(), grad_out.data());
    let (dxd, dgd, dbd) = (dx.data.as_mut_slice(), dgain.data.as_mut_slice(), dbias.data.as_mut_slice());
    let inv_n = T::from_f64(1.0 / n as f64);
    let eps = T::from_f64(eps);
    for r in 0..rows {
        let row = &xd[r * n..(r + 1) * n];
        let g_row = &od[r * n..(r + 1) * n];
        let dx_row = &mut dxd[r * n..(r + 1) * n];
        let mut mean = T::zero();
        for &v in row {
            mean += v;
        }
        mean *= inv_n;
        let mut var = T::zero();
        for &v in row {
            let d = v - mean;
            var += d * d;
        }
        var *= inv_n;
        let inv_std = T::one() / (var + eps).sqrt();
        // dxhat = dy * gain; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
        let mut sum_dxhat = T::zero();
        let mut sum_dxhat_xhat = T::zero();
        for j in 0..n {
            let xhat = (row[j] - mean) * inv_std;
            let dxhat = g_row[j] * gd[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dgd[j] += g_row[j] * xhat;
            dbd[j] += g_row[j];
        }
        let mean_dxhat = sum_dxhat * inv_n;
        let mean_dxhat_xhat = sum_dxhat_xhat * inv_n;
        for j in 0..n {
            let xhat = (row[j] - mean) * inv_std;
            let dxhat = g_row[j] * gd[j];
            dx_row[j] = inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
        }
    }
    Ok((dx, dgain, dbias))
}

/// Nearest-neighbour 2x upsample of `[c,h,w]`.
pub fn upsample_nearest_2x<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(TensorError::InvalidShape {
            shape: s.to_vec(),
            reason: "upsample expects [c,h,w]",
        });
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let mut out = Tensor::zeros(&[c, 2 * h, 2 * w]);
    let (xd, od) = (x.data(), out.data_mut());
    for ci in 0..c {
        for y in 0..2 * h {
            let src_row = &xd[(ci * h + y / 2) * w..(ci * h + y / 2 + 1) * w];
            let dst_row = &mut od[(ci * 2 * h + y) * 2 * w..(ci * 2 * h + y + 1) * 2 * w];
            for (xcol, d) in dst_row.iter_mut().enumerate() {
                *d = src_row[xcol / 2];
            }
        }
    }
    Ok(out)
}

/// Backward of the 2x upsample: 2x2 sum pooling of the output gradient.
pub fn upsample_nearest_2x_grad<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let s = grad_out.shape();
    if s.len() != 3 || s[1] % 2 != 0 || s[2] % 2 != 0 {
        return Err(TensorError::InvalidShape {
            shape: s.to_vec(),
            reason: "upsample grad expects even [c,2h,2w]",
        });
    }
    let (c, h2, w2) = (s[0], s[1], s[2]);
    let (h, w) = (h2 / 2, w2 / 2);
    let mut grad = Tensor::zeros(&[c, h, w]);
    let (od, gd) = (grad_out.data(), grad.data_mut());
    for ci in 0..c {
        for y in 0..h2 {
            let src_row = &od[(ci * h2 + y) * w2..(ci * h2 + y + 1) * w2];
            let dst_row = &mut gd[(ci * h + y / 2) * w..(ci * h + y / 2 + 1) * w];
            for (xcol, &v) in src_row.iter().enumerate() {
                dst_row[xcol / 2] += v;
            }
        }
    }
    Ok(grad)
}

fn dims2<T: Scalar>(t: &Tensor<T>, context: &'static str) -> Result<(usize, usize), TensorError> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        other => Err(TensorError::ShapeMismatch {
            context: if context.is_empty() { "expected rank-2 tensor" } else { context },
            lhs: other.to_vec(),
            rhs: vec![],
        }),
    }
}
