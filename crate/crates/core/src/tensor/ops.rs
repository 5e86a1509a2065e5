//! Numeric kernels on `[C, H, W]` frames and their vector-Jacobian products.
//!
//! Temporal kernels act on a window of frames ordered oldest first. Spatial
//! padding follows the "same" convention: the output has `ceil(H / stride)`
//! rows and the padding is split with the smaller half on top.
//! Every kernel uses a fixed loop order, so results are bitwise reproducible.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Relu,
    Tanh,
}

impl Nonlinearity {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Nonlinearity::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
}

/// Output extent and leading padding for one spatial axis.
fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

pub fn output_extent(input: usize, stride: usize) -> usize {
    input.div_ceil(stride)
}

fn window_shape(window: &[Tensor]) -> Result<(usize, usize, usize)> {
    let first = window
        .first()
        .ok_or_else(|| Error::shape("empty temporal window"))?;
    let chw = first.chw()?;
    for t in &window[1..] {
        if t.shape() != first.shape() {
            return Err(Error::shape(format!(
                "temporal window entries differ: {:?} vs {:?}",
                first.shape(),
                t.shape()
            )));
        }
    }
    Ok(chw)
}

/// Cross-correlation of a window of frames with `weight[co, ci, tau, ky, kx]`.
pub fn conv(
    window: &[Tensor],
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: (usize, usize),
) -> Result<Tensor> {
    let (cin, h, w) = window_shape(window)?;
    let (cout, wcin, e, kh, kw) = conv_weight_dims(weight)?;
    if wcin != cin || e != window.len() {
        return Err(Error::shape(format!(
            "conv weight {:?} does not fit a window of {} frames shaped {:?}",
            weight.shape(),
            window.len(),
            window[0].shape()
        )));
    }
    let (ho, pt) = same_padding(h, kh, stride.0);
    let (wo, pl) = same_padding(w, kw, stride.1);
    let mut out = vec![0.0; cout * ho * wo];
    let wd = weight.data();
    for co in 0..cout {
        let plane = &mut out[co * ho * wo..(co + 1) * ho * wo];
        if let Some(b) = bias {
            plane.fill(b.data()[co]);
        }
        for (tau, frame) in window.iter().enumerate() {
            let x = frame.data();
            for ci in 0..cin {
                let xin = &x[ci * h * w..(ci + 1) * h * w];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wd[(((co * cin + ci) * e + tau) * kh + ky) * kw + kx];
                        for oy in 0..ho {
                            let iy = (oy * stride.0 + ky) as isize - pt as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &xin[iy as usize * w..(iy as usize + 1) * w];
                            let orow = &mut plane[oy * wo..(oy + 1) * wo];
                            for (ox, o) in orow.iter_mut().enumerate() {
                                let ix = (ox * stride.1 + kx) as isize - pl as isize;
                                if ix >= 0 && ix < w as isize {
                                    *o += wv * row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![cout, ho, wo], out)
}

fn conv_weight_dims(weight: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    match weight.shape()[..] {
        [a, b, c, d, e] => Ok((a, b, c, d, e)),
        _ => Err(Error::shape(format!(
            "conv weight must be [Cout, Cin, T, KH, KW], got {:?}",
            weight.shape()
        ))),
    }
}

pub struct ConvGrads {
    pub window: Vec<Tensor>,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn conv_backward(
    window: &[Tensor],
    weight: &Tensor,
    stride: (usize, usize),
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let (cin, h, w) = window_shape(window)?;
    let (cout, _, e, kh, kw) = conv_weight_dims(weight)?;
    let (ho, pt) = same_padding(h, kh, stride.0);
    let (wo, pl) = same_padding(w, kw, stride.1);
    if grad_out.shape() != [cout, ho, wo] {
        return Err(Error::shape(format!(
            "conv output gradient {:?}, expected {:?}",
            grad_out.shape(),
            [cout, ho, wo]
        )));
    }
    let g = grad_out.data();
    let wd = weight.data();
    let mut gw = vec![0.0; weight.len()];
    let mut gx: Vec<Vec<f64>> = vec![vec![0.0; cin * h * w]; e];
    let mut gb = vec![0.0; cout];
    for co in 0..cout {
        let gplane = &g[co * ho * wo..(co + 1) * ho * wo];
        gb[co] = gplane.iter().sum();
        for (tau, frame) in window.iter().enumerate() {
            let x = frame.data();
            for ci in 0..cin {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let widx = (((co * cin + ci) * e + tau) * kh + ky) * kw + kx;
                        let wv = wd[widx];
                        let mut acc = 0.0;
                        for oy in 0..ho {
                            let iy = (oy * stride.0 + ky) as isize - pt as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let base = ci * h * w + iy as usize * w;
                            for ox in 0..wo {
                                let ix = (ox * stride.1 + kx) as isize - pl as isize;
                                if ix >= 0 && ix < w as isize {
                                    let gv = gplane[oy * wo + ox];
                                    acc += gv * x[base + ix as usize];
                                    gx[tau][base + ix as usize] += wv * gv;
                                }
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        window: gx
            .into_iter()
            .map(|d| Tensor::new(vec![cin, h, w], d))
            .collect::<Result<_>>()?,
        weight: Tensor::new(weight.shape().to_vec(), gw)?,
        bias: Tensor::new(vec![cout], gb)?,
    })
}

/// Pooling over the temporal window and a `kh x kw` spatial neighbourhood.
/// Spatial padding is excluded from both max and mean; zero frames in the
/// window are ordinary values.
pub fn pool(
    window: &[Tensor],
    kind: PoolKind,
    kernel: (usize, usize),
    stride: (usize, usize),
) -> Result<Tensor> {
    let (c, h, w) = window_shape(window)?;
    let (ho, pt) = same_padding(h, kernel.0, stride.0);
    let (wo, pl) = same_padding(w, kernel.1, stride.1);
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut sum = 0.0;
                let mut count = 0usize;
                for frame in window {
                    let x = frame.data();
                    for_each_tap(h, w, oy, ox, kernel, stride, (pt, pl), |iy, ix| {
                        let v = x[(ch * h + iy) * w + ix];
                        if v > best {
                            best = v;
                        }
                        sum += v;
                        count += 1;
                    });
                }
                out[(ch * ho + oy) * wo + ox] = match kind {
                    PoolKind::Max => best,
                    PoolKind::Avg => sum / count as f64,
                };
            }
        }
    }
    Tensor::new(vec![c, ho, wo], out)
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn for_each_tap(
    h: usize,
    w: usize,
    oy: usize,
    ox: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
    pad: (usize, usize),
    mut f: impl FnMut(usize, usize),
) {
    for ky in 0..kernel.0 {
        let iy = (oy * stride.0 + ky) as isize - pad.0 as isize;
        if iy < 0 || iy >= h as isize {
            continue;
        }
        for kx in 0..kernel.1 {
            let ix = (ox * stride.1 + kx) as isize - pad.1 as isize;
            if ix < 0 || ix >= w as isize {
                continue;
            }
            f(iy as usize, ix as usize);
        }
    }
}

/// Max pooling routes the gradient to the first maximal tap in
/// (frame, row, column) order.
pub fn pool_backward(
    window: &[Tensor],
    kind: PoolKind,
    kernel: (usize, usize),
    stride: (usize, usize),
    grad_out: &Tensor,
) -> Result<Vec<Tensor>> {
    let (c, h, w) = window_shape(window)?;
    let (ho, pt) = same_padding(h, kernel.0, stride.0);
    let (wo, pl) = same_padding(w, kernel.1, stride.1);
    if grad_out.shape() != [c, ho, wo] {
        return Err(Error::shape(format!(
            "pool output gradient {:?}, expected {:?}",
            grad_out.shape(),
            [c, ho, wo]
        )));
    }
    let g = grad_out.data();
    let mut gx: Vec<Vec<f64>> = vec![vec![0.0; c * h * w]; window.len()];
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let gv = g[(ch * ho + oy) * wo + ox];
                match kind {
                    PoolKind::Max => {
                        let mut best = f64::NEG_INFINITY;
                        let mut arg = (0, 0);
                        for (f, frame) in window.iter().enumerate() {
                            let x = frame.data();
                            for_each_tap(h, w, oy, ox, kernel, stride, (pt, pl), |iy, ix| {
                                let idx = (ch * h + iy) * w + ix;
                                if x[idx] > best {
                                    best = x[idx];
                                    arg = (f, idx);
                                }
                            });
                        }
                        gx[arg.0][arg.1] += gv;
                    }
                    PoolKind::Avg => {
                        let mut taps = Vec::new();
                        for f in 0..window.len() {
                            for_each_tap(h, w, oy, ox, kernel, stride, (pt, pl), |iy, ix| {
                                taps.push((f, (ch * h + iy) * w + ix));
                            });
                        }
                        let share = gv / taps.len() as f64;
                        for (f, idx) in taps {
                            gx[f][idx] += share;
                        }
                    }
                }
            }
        }
    }
    gx.into_iter()
        .map(|d| Tensor::new(vec![c, h, w], d))
        .collect()
}

/// Source coordinate and interpolation weights for one output index
/// (half-pixel centres, clamped at the border).
fn bilinear_taps(out_idx: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((out_idx as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, src - lo as f64)
}

/// Bilinear resize to `(height, width)`. Constant inputs are preserved exactly.
pub fn resize_bilinear(x: &Tensor, size: (usize, usize)) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    if (h, w) == size {
        return Ok(x.clone());
    }
    let (ho, wo) = size;
    let d = x.data();
    let mut out = vec![0.0; c * ho * wo];
    for oy in 0..ho {
        let (y0, y1, wy) = bilinear_taps(oy, h, ho);
        for ox in 0..wo {
            let (x0, x1, wx) = bilinear_taps(ox, w, wo);
            for ch in 0..c {
                let base = ch * h * w;
                let a = d[base + y0 * w + x0];
                let b = d[base + y0 * w + x1];
                let cc = d[base + y1 * w + x0];
                let dd = d[base + y1 * w + x1];
                let top = a + wx * (b - a);
                let bottom = cc + wx * (dd - cc);
                out[(ch * ho + oy) * wo + ox] = top + wy * (bottom - top);
            }
        }
    }
    Tensor::new(vec![c, ho, wo], out)
}

pub fn resize_bilinear_backward(
    input_shape: (usize, usize, usize),
    grad_out: &Tensor,
) -> Result<Tensor> {
    let (c, h, w) = input_shape;
    let (gc, ho, wo) = grad_out.chw()?;
    if gc != c {
        return Err(Error::shape("resize gradient channel mismatch"));
    }
    if (h, w) == (ho, wo) {
        return Ok(grad_out.clone());
    }
    let g = grad_out.data();
    let mut gx = vec![0.0; c * h * w];
    for oy in 0..ho {
        let (y0, y1, wy) = bilinear_taps(oy, h, ho);
        for ox in 0..wo {
            let (x0, x1, wx) = bilinear_taps(ox, w, wo);
            for ch in 0..c {
                let gv = g[(ch * ho + oy) * wo + ox];
                let base = ch * h * w;
                gx[base + y0 * w + x0] += gv * (1.0 - wx) * (1.0 - wy);
                gx[base + y0 * w + x1] += gv * wx * (1.0 - wy);
                gx[base + y1 * w + x0] += gv * (1.0 - wx) * wy;
                gx[base + y1 * w + x1] += gv * wx * wy;
            }
        }
    }
    Tensor::new(vec![c, h, w], gx)
}

/// Joins `[C_i, H, W]` tensors along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat of zero tensors"))?;
    let (_, h, w) = first.chw()?;
    let mut channels = 0;
    let mut data = Vec::new();
    for p in parts {
        let (c, ph, pw) = p.chw()?;
        if (ph, pw) != (h, w) {
            return Err(Error::shape(format!(
                "concat spatial mismatch: {:?} vs {:?}",
                first.shape(),
                p.shape()
            )));
        }
        channels += c;
        data.extend_from_slice(p.data());
    }
    Tensor::new(vec![channels, h, w], data)
}

/// Inverse of [`concat_channels`] for gradients.
pub fn split_channels(x: &Tensor, channels: &[usize]) -> Result<Vec<Tensor>> {
    let (c, h, w) = x.chw()?;
    if channels.iter().sum::<usize>() != c {
        return Err(Error::shape(format!(
            "cannot split {c} channels into {channels:?}"
        )));
    }
    let mut out = Vec::with_capacity(channels.len());
    let mut off = 0;
    for &n in channels {
        out.push(Tensor::new(
            vec![n, h, w],
            x.data()[off * h * w..(off + n) * h * w].to_vec(),
        )?);
        off += n;
    }
    Ok(out)
}

pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    let n = (h * w) as f64;
    let data = (0..c)
        .map(|ch| x.data()[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / n)
        .collect();
    Tensor::new(vec![c, 1, 1], data)
}

pub fn global_avg_pool_backward(input_shape: (usize, usize, usize), grad_out: &Tensor) -> Tensor {
    let (c, h, w) = input_shape;
    let n = (h * w) as f64;
    Tensor::from_fn(&[c, h, w], |i| grad_out.data()[i / (h * w)] / n)
}

/// `weight[out, in] · flatten(window) + bias`, returned as `[out, 1, 1]`.
pub fn linear(window: &[Tensor], weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (out_f, in_f) = match weight.shape()[..] {
        [o, i] => (o, i),
        _ => return Err(Error::shape("linear weight must be [out, in]")),
    };
    let total: usize = window.iter().map(Tensor::len).sum();
    if total != in_f {
        return Err(Error::shape(format!(
            "linear expects {in_f} inputs, window has {total}"
        )));
    }
    let wd = weight.data();
    let mut out = vec![0.0; out_f];
    for (o, slot) in out.iter_mut().enumerate() {
        let mut acc = bias.map_or(0.0, |b| b.data()[o]);
        let row = &wd[o * in_f..(o + 1) * in_f];
        let mut k = 0;
        for frame in window {
            for &x in frame.data() {
                acc += row[k] * x;
                k += 1;
            }
        }
        *slot = acc;
    }
    Tensor::new(vec![out_f, 1, 1], out)
}

pub fn linear_backward(
    window: &[Tensor],
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Vec<Tensor>, Tensor, Tensor)> {
    let (out_f, in_f) = match weight.shape()[..] {
        [o, i] => (o, i),
        _ => return Err(Error::shape("linear weight must be [out, in]")),
    };
    if grad_out.len() != out_f {
        return Err(Error::shape("linear output gradient length mismatch"));
    }
    let g = grad_out.data();
    let wd = weight.data();
    let flat: Vec<f64> = window.iter().flat_map(|f| f.data().iter().copied()).collect();
    let mut gw = vec![0.0; out_f * in_f];
    let mut gflat = vec![0.0; in_f];
    for o in 0..out_f {
        for i in 0..in_f {
            gw[o * in_f + i] = g[o] * flat[i];
            gflat[i] += g[o] * wd[o * in_f + i];
        }
    }
    let mut off = 0;
    let mut gwin = Vec::with_capacity(window.len());
    for f in window {
        gwin.push(Tensor::new(
            f.shape().to_vec(),
            gflat[off..off + f.len()].to_vec(),
        )?);
        off += f.len();
    }
    Ok((
        gwin,
        Tensor::new(vec![out_f, in_f], gw)?,
        Tensor::new(vec![out_f], g.to_vec())?,
    ))
}
