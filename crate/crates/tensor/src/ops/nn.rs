//! Convolution, pooling and normalization ops (NCHW layout).

use std::sync::Arc;

use rayon::prelude::*;

use super::linalg::{matmul_into, transpose2d};
use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::{pairwise_sum, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dParams {
    pub stride: [usize; 2],
    /// top, left, bottom, right
    pub pads: [usize; 4],
    pub dilation: [usize; 2],
}

impl Default for Conv2dParams {
    fn default() -> Self {
        Conv2dParams {
            stride: [1, 1],
            pads: [0; 4],
            dilation: [1, 1],
        }
    }
}

impl Conv2dParams {
    pub fn new(stride: usize, padding: usize) -> Self {
        Conv2dParams {
            stride: [stride, stride],
            pads: [padding; 4],
            dilation: [1, 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool2dParams {
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    /// top, left, bottom, right
    pub pads: [usize; 4],
}

impl Pool2dParams {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Pool2dParams {
            kernel: [kernel, kernel],
            stride: [stride, stride],
            pads: [0; 4],
        }
    }
}

fn out_extent(len: usize, pad_lo: usize, pad_hi: usize, kernel: usize, stride: usize) -> Result<usize> {
    let padded = len + pad_lo + pad_hi;
    if kernel == 0 || stride == 0 || padded < kernel {
        return Err(TensorError::shape(format!(
            "window {} stride {} does not fit extent {} (+{} +{})",
            kernel, stride, len, pad_lo, pad_hi
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

fn nchw(shape: &[usize], op: &str) -> Result<[usize; 4]> {
    match *shape {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(TensorError::shape(format!("{op} expects NCHW input, got {:?}", shape))),
    }
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    p: Conv2dParams,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        // f(col_row, col_index, source_offset_in_image)
        let [sh, sw] = self.p.stride;
        let [dh, dw] = self.p.dilation;
        let (pt, pl) = (self.p.pads[0], self.p.pads[1]);
        for c in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    for oy in 0..self.oh {
                        let iy = (oy * sh + ky * dh) as isize - pt as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.ow {
                            let ix = (ox * sw + kx * dw) as isize - pl as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            f(
                                row,
                                oy * self.ow + ox,
                                (c * self.h + iy as usize) * self.w + ix as usize,
                            );
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, image: &[f32]) -> Vec<f32> {
        let cols_n = self.oh * self.ow;
        let mut cols = vec![0.0; self.rows() * cols_n];
        self.for_each_tap(|row, col, src| cols[row * cols_n + col] = image[src]);
        cols
    }

    fn col2im(&self, cols: &[f32], image: &mut [f32]) {
        let cols_n = self.oh * self.ow;
        self.for_each_tap(|row, col, src| image[src] += cols[row * cols_n + col]);
    }
}

impl<'t> Var<'t> {
    /// 2-D cross-correlation. `weight` is (O, C, kh, kw); `bias` is (O).
    pub fn conv2d(self, weight: Var<'t>, bias: Option<Var<'t>>, params: Conv2dParams) -> Result<Var<'t>> {
        let x = self.value();
        let wv = weight.value();
        let [n, c, h, w] = nchw(x.shape(), "conv2d")?;
        let [o, wc, kh, kw] = nchw(wv.shape(), "conv2d weight")?;
        if wc != c {
            return Err(TensorError::shape(format!(
                "conv2d weight expects {} input channels, input has {}",
                wc, c
            )));
        }
        if params.stride.contains(&0) || params.dilation.contains(&0) {
            return Err(TensorError::shape("conv2d stride and dilation must be >= 1"));
        }
        let ekh = (kh - 1) * params.dilation[0] + 1;
        let ekw = (kw - 1) * params.dilation[1] + 1;
        let oh = out_extent(h, params.pads[0], params.pads[2], ekh, params.stride[0])?;
        let ow = out_extent(w, params.pads[1], params.pads[3], ekw, params.stride[1])?;
        let bv = match bias {
            Some(b) => {
                let b = b.value();
                if b.shape() != [o] {
                    return Err(TensorError::shape(format!(
                        "conv2d bias shape {:?}, expected [{}]",
                        b.shape(),
                        o
                    )));
                }
                Some(b)
            }
            None => None,
        };
        let geom = Arc::new(ConvGeom {
            c,
            h,
            w,
            kh,
            kw,
            oh,
            ow,
            p: params,
        });
        let plane = oh * ow;
        let k = geom.rows();
        let mut out = vec![0.0; n * o * plane];
        for (img, dst) in out.chunks_mut(o * plane).enumerate() {
            let cols = geom.im2col(&x.data()[img * c * h * w..(img + 1) * c * h * w]);
            matmul_into(wv.data(), &cols, dst, o, k, plane);
            if let Some(b) = &bv {
                for (oc, chunk) in dst.chunks_mut(plane).enumerate() {
                    let bias = b.data()[oc];
                    chunk.iter_mut().for_each(|v| *v += bias);
                }
            }
        }
        let out = Tensor::from_vec(vec![n, o, oh, ow], out)?;
        let mut inputs = vec![self, weight];
        inputs.extend(bias);
        let has_bias = bias.is_some();
        let need_x = self.requires_grad();
        Ok(self.tape().record("conv2d", &inputs, Arc::new(out), move |g| {
            let mut gx = vec![0.0; if need_x { x.numel() } else { 0 }];
            let mut gw = vec![0.0; wv.numel()];
            let mut gb = vec![0.0; if has_bias { o } else { 0 }];
            let wt = transpose2d(wv.data(), o, k);
            let mut tmp_w = vec![0.0; o * k];
            let mut dcols = vec![0.0; k * plane];
            for img in 0..n {
                let gimg = &g.data()[img * o * plane..(img + 1) * o * plane];
                let cols = geom.im2col(&x.data()[img * c * h * w..(img + 1) * c * h * w]);
                let cols_t = transpose2d(&cols, k, plane);
                matmul_into(gimg, &cols_t, &mut tmp_w, o, plane, k);
                gw.iter_mut().zip(&tmp_w).for_each(|(a, b)| *a += b);
                if has_bias {
                    for (oc, chunk) in gimg.chunks(plane).enumerate() {
                        gb[oc] += pairwise_sum(chunk);
                    }
                }
                if need_x {
                    matmul_into(&wt, gimg, &mut dcols, k, o, plane);
                    geom.col2im(&dcols, &mut gx[img * c * h * w..(img + 1) * c * h * w]);
                }
            }
            let mut grads = vec![
                need_x.then(|| Tensor::from_vec(x.shape().to_vec(), gx).expect("conv grad")),
                Some(Tensor::from_vec(wv.shape().to_vec(), gw).expect("conv grad")),
            ];
            if has_bias {
                grads.push(Some(Tensor::vector(gb)));
            }
            grads
        }))
    }

    /// Max pooling; ties go to the lowest flat index in the window.
    pub fn max_pool2d(self, p: Pool2dParams) -> Result<Var<'t>> {
        let x = self.value();
        let [n, c, h, w] = nchw(x.shape(), "max_pool2d")?;
        let oh = out_extent(h, p.pads[0], p.pads[2], p.kernel[0], p.stride[0])?;
        let ow = out_extent(w, p.pads[1], p.pads[3], p.kernel[1], p.stride[1])?;
        let planes = n * c;
        let results: Vec<(Vec<f32>, Vec<usize>)> = (0..planes)
            .into_par_iter()
            .map(|pl| {
                let src = &x.data()[pl * h * w..(pl + 1) * h * w];
                let mut vals = Vec::with_capacity(oh * ow);
                let mut arg = Vec::with_capacity(oh * ow);
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f32::NEG_INFINITY;
                        let mut best_i = usize::MAX;
                        for ky in 0..p.kernel[0] {
                            let iy = (oy * p.stride[0] + ky) as isize - p.pads[0] as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..p.kernel[1] {
                                let ix = (ox * p.stride[1] + kx) as isize - p.pads[1] as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let i = iy as usize * w + ix as usize;
                                if best_i == usize::MAX || src[i] > best {
                                    best = src[i];
                                    best_i = i;
                                }
                            }
                        }
                        vals.push(if best_i == usize::MAX { 0.0 } else { best });
                        arg.push(best_i);
                    }
                }
                (vals, arg)
            })
            .collect();
        let mut data = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        for (v, a) in results {
            data.extend(v);
            argmax.extend(a);
        }
        let out = Tensor::from_vec(vec![n, c, oh, ow], data)?;
        let in_shape = x.shape().to_vec();
        Ok(self.tape().record("max_pool2d", &[self], Arc::new(out), move |g| {
            let mut grad = Tensor::zeros(in_shape.clone());
            let gd = grad.data_mut();
            let per = oh * ow;
            for (k, (&a, &gv)) in argmax.iter().zip(g.data()).enumerate() {
                if a != usize::MAX {
                    gd[(k / per) * h * w + a] += gv;
                }
            }
            vec![Some(grad)]
        }))
    }

    pub fn avg_pool2d(self, p: Pool2dParams, count_include_pad: bool) -> Result<Var<'t>> {
        let x = self.value();
        let [n, c, h, w] = nchw(x.shape(), "avg_pool2d")?;
        let oh = out_extent(h, p.pads[0], p.pads[2], p.kernel[0], p.stride[0])?;
        let ow = out_extent(w, p.pads[1], p.pads[3], p.kernel[1], p.stride[1])?;
        // Per output: the in-bounds source indices and the divisor.
        let mut windows: Vec<(Vec<usize>, f32)> = Vec::with_capacity(oh * ow);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut idx = Vec::new();
                for ky in 0..p.kernel[0] {
                    let iy = (oy * p.stride[0] + ky) as isize - p.pads[0] as isize;
                    for kx in 0..p.kernel[1] {
                        let ix = (ox * p.stride[1] + kx) as isize - p.pads[1] as isize;
                        if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                            idx.push(iy as usize * w + ix as usize);
                        }
                    }
                }
                let count = if count_include_pad {
                    p.kernel[0] * p.kernel[1]
                } else {
                    idx.len()
                };
                windows.push((idx, count.max(1) as f32));
            }
        }
        let mut data = Vec::with_capacity(n * c * oh * ow);
        let mut buf = Vec::new();
        for pl in 0..n * c {
            let src = &x.data()[pl * h * w..(pl + 1) * h * w];
            for (idx, count) in &windows {
                buf.clear();
                buf.extend(idx.iter().map(|&i| src[i]));
                data.push(pairwise_sum(&buf) / count);
            }
        }
        let out = Tensor::from_vec(vec![n, c, oh, ow], data)?;
        let in_shape = x.shape().to_vec();
        Ok(self.tape().record("avg_pool2d", &[self], Arc::new(out), move |g| {
            let mut grad = Tensor::zeros(in_shape.clone());
            let gd = grad.data_mut();
            let per = oh * ow;
            for (k, &gv) in g.data().iter().enumerate() {
                let (idx, count) = &windows[k % per];
                let base = (k / per) * h * w;
                for &i in idx {
                    gd[base + i] += gv / count;
                }
            }
            vec![Some(grad)]
        }))
    }

    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        let x = self.value();
        let (outer, len, inner) = split_axis(x.shape(), axis)?;
        let mut y = vec![0.0; x.numel()];
        let mut buf = vec![0.0; len];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).map(|k| x.data()[at(k)]).fold(f32::NEG_INFINITY, f32::max);
                for k in 0..len {
                    buf[k] = (x.data()[at(k)] - max).exp();
                }
                let total = pairwise_sum(&buf);
                for k in 0..len {
                    y[at(k)] = buf[k] / total;
                }
            }
        }
        let y = Arc::new(Tensor::from_vec(x.shape().to_vec(), y)?);
        let saved = y.clone();
        Ok(self.tape().record("softmax", &[self], y, move |g| {
            let mut gx = vec![0.0; g.numel()];
            let mut buf = vec![0.0; len];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| (o * len + k) * inner + i;
                    for k in 0..len {
                        buf[k] = g.data()[at(k)] * saved.data()[at(k)];
                    }
                    let dot = pairwise_sum(&buf);
                    for k in 0..len {
                        gx[at(k)] = saved.data()[at(k)] * (g.data()[at(k)] - dot);
                    }
                }
            }
            vec![Some(Tensor::from_vec(g.shape().to_vec(), gx).expect("softmax grad"))]
        }))
    }

    /// Normalize over axes `axis..rank` to zero mean and unit variance
    /// (no affine part).
    pub fn layer_norm(self, axis: usize, eps: f32) -> Result<Var<'t>> {
        let x = self.value();
        if axis >= x.rank() {
            return Err(TensorError::shape(format!(
                "layer_norm axis {} for rank {}",
                axis,
                x.rank()
            )));
        }
        let group: usize = x.shape()[axis..].iter().product();
        let mut y = vec![0.0; x.numel()];
        let mut inv_std = Vec::with_capacity(x.numel() / group.max(1));
        let mut buf = vec![0.0; group];
        for (src, dst) in x.data().chunks(group).zip(y.chunks_mut(group)) {
            let mean = pairwise_sum(src) / group as f32;
            for (b, &v) in buf.iter_mut().zip(src) {
                *b = (v - mean) * (v - mean);
            }
            let inv = 1.0 / (pairwise_sum(&buf) / group as f32 + eps).sqrt();
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let y = Arc::new(Tensor::from_vec(x.shape().to_vec(), y)?);
        let saved = y.clone();
        Ok(self.tape().record("layer_norm", &[self], y, move |g| {
            let mut gx = vec![0.0; g.numel()];
            let mut buf = vec![0.0; group];
            for (((gs, ys), dst), &inv) in g
                .data()
                .chunks(group)
                .zip(saved.data().chunks(group))
                .zip(gx.chunks_mut(group))
                .zip(&inv_std)
            {
                let mean_g = pairwise_sum(gs) / group as f32;
                for ((b, &gv), &yv) in buf.iter_mut().zip(gs).zip(ys) {
                    *b = gv * yv;
                }
                let mean_gy = pairwise_sum(&buf) / group as f32;
                for ((d, &gv), &yv) in dst.iter_mut().zip(gs).zip(ys) {
                    *d = inv * (gv - mean_g - yv * mean_gy);
                }
            }
            vec![Some(Tensor::from_vec(g.shape().to_vec(), gx).expect("layer_norm grad"))]
        }))
    }

    /// Inference-mode batch normalization over channel axis 1 with frozen
    /// statistics; only the input receives a gradient.
    pub fn batch_norm_inference(
        self,
        scale: &Tensor,
        bias: &Tensor,
        mean: &Tensor,
        var: &Tensor,
        eps: f32,
    ) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() < 2 {
            return Err(TensorError::shape("batch_norm expects rank >= 2 input"));
        }
        let c = x.shape()[1];
        for p in [scale, bias, mean, var] {
            if p.shape() != [c] {
                return Err(TensorError::shape(format!(
                    "batch_norm parameter shape {:?}, expected [{}]",
                    p.shape(),
                    c
                )));
            }
        }
        let inner: usize = x.shape()[2..].iter().product();
        let mul: Vec<f32> = (0..c).map(|i| scale.data()[i] / (var.data()[i] + eps).sqrt()).collect();
        let add: Vec<f32> = (0..c).map(|i| bias.data()[i] - mean.data()[i] * mul[i]).collect();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let ch = (k / inner) % c;
                v * mul[ch] + add[ch]
            })
            .collect();
        let out = Tensor::from_vec(x.shape().to_vec(), data)?;
        Ok(self.tape().record("batch_norm", &[self], Arc::new(out), move |g| {
            let data = g
                .data()
                .iter()
                .enumerate()
                .map(|(k, &gv)| gv * mul[(k / inner) % c])
                .collect();
            vec![Some(
                Tensor::from_vec(g.shape().to_vec(), data).expect("batch_norm grad"),
            )]
        }))
    }
}

pub(crate) fn split_axis(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(TensorError::shape(format!("axis {} for shape {:?}", axis, shape)));
    }
    Ok((
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    ))
}
