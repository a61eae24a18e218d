//! Layout ops and axis reductions.

use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::{broadcast_index_map, numel, pairwise_sum, strides, Tensor};

/// Odometer gather: element `j` of the output (row-major over `out_shape`)
/// reads `src[base + Σ j_i · src_strides_i]`.
fn strided_gather(src: &[f32], out_shape: &[usize], src_strides: &[usize], base: usize) -> Vec<f32> {
    let n = numel(out_shape);
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; out_shape.len()];
    let mut offset = base;
    for _ in 0..n {
        out.push(src[offset]);
        for d in (0..out_shape.len()).rev() {
            idx[d] += 1;
            offset += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= src_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    out
}

/// Permute axes: output axis `i` is input axis `perm[i]`.
pub fn permute(t: &Tensor, perm: &[usize]) -> Tensor {
    let in_strides = strides(t.shape());
    let out_shape: Vec<usize> = perm.iter().map(|&p| t.shape()[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let data = strided_gather(t.data(), &out_shape, &src_strides, 0);
    Tensor::from_vec(out_shape, data).expect("permute shape")
}

fn check_perm(perm: &[usize], rank: usize) -> Result<()> {
    let mut seen = vec![false; rank];
    if perm.len() != rank {
        return Err(TensorError::shape(format!("permutation {:?} for rank {}", perm, rank)));
    }
    for &p in perm {
        if p >= rank || seen[p] {
            return Err(TensorError::shape(format!("invalid permutation {:?}", perm)));
        }
        seen[p] = true;
    }
    Ok(())
}

fn normalize_axes(axes: &[usize], rank: usize) -> Result<Vec<usize>> {
    let mut out = axes.to_vec();
    out.sort_unstable();
    out.dedup();
    if out.iter().any(|&a| a >= rank) {
        return Err(TensorError::shape(format!(
            "axes {:?} out of range for rank {}",
            axes, rank
        )));
    }
    Ok(out)
}

impl<'t> Var<'t> {
    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        let out = x.reshaped(shape.to_vec())?;
        let in_shape = x.shape().to_vec();
        Ok(self.tape().record("reshape", &[self], Arc::new(out), move |g| {
            vec![Some(g.reshaped(in_shape.clone()).expect("reshape grad"))]
        }))
    }

    pub fn transpose(self, perm: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        check_perm(perm, x.rank())?;
        let out = permute(&x, perm);
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        Ok(self.tape().record("transpose", &[self], Arc::new(out), move |g| {
            vec![Some(permute(g, &inverse))]
        }))
    }

    /// Sum over `axes` (fixed-order pairwise summation per output element).
    pub fn reduce_sum(self, axes: &[usize], keepdim: bool) -> Result<Var<'t>> {
        let x = self.value();
        let rank = x.rank();
        let axes = normalize_axes(axes, rank)?;
        let kept: Vec<usize> = (0..rank).filter(|a| !axes.contains(a)).collect();
        let mut perm = kept.clone();
        perm.extend(&axes);
        let moved = permute(&x, &perm);
        let inner: usize = axes.iter().map(|&a| x.shape()[a]).product();
        let data: Vec<f32> = if inner == 0 {
            vec![0.0; kept.iter().map(|&a| x.shape()[a]).product()]
        } else {
            moved.data().chunks(inner).map(pairwise_sum).collect()
        };
        let keep_shape: Vec<usize> = (0..rank)
            .map(|a| if axes.contains(&a) { 1 } else { x.shape()[a] })
            .collect();
        let out_shape: Vec<usize> = if keepdim {
            keep_shape.clone()
        } else {
            kept.iter().map(|&a| x.shape()[a]).collect()
        };
        let out = Tensor::from_vec(out_shape, data)?;
        let in_shape = x.shape().to_vec();
        Ok(self.tape().record("reduce_sum", &[self], Arc::new(out), move |g| {
            let map = broadcast_index_map(&keep_shape, &in_shape);
            let data = map.iter().map(|&i| g.data()[i]).collect();
            vec![Some(Tensor::from_vec(in_shape.clone(), data).expect("reduce grad"))]
        }))
    }

    pub fn reduce_mean(self, axes: &[usize], keepdim: bool) -> Result<Var<'t>> {
        let shape = self.shape();
        let count: usize = normalize_axes(axes, shape.len())?.iter().map(|&a| shape[a]).product();
        Ok(self.reduce_sum(axes, keepdim)?.mul_scalar(1.0 / count.max(1) as f32))
    }

    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::shape("concat of zero tensors"))?;
        let values: Vec<Arc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let rank = values[0].rank();
        if axis >= rank {
            return Err(TensorError::shape(format!("concat axis {} for rank {}", axis, rank)));
        }
        for v in &values[1..] {
            let ok = v.rank() == rank && (0..rank).all(|d| d == axis || v.shape()[d] == values[0].shape()[d]);
            if !ok {
                return Err(TensorError::shape(format!(
                    "concat shapes {:?} and {:?} along axis {}",
                    values[0].shape(),
                    v.shape(),
                    axis
                )));
            }
        }
        let outer: usize = values[0].shape()[..axis].iter().product();
        let blocks: Vec<usize> = values.iter().map(|v| v.numel() / outer.max(1)).collect();
        let mut data = Vec::with_capacity(values.iter().map(|v| v.numel()).sum());
        for o in 0..outer {
            for (v, &b) in values.iter().zip(&blocks) {
                data.extend_from_slice(&v.data()[o * b..(o + 1) * b]);
            }
        }
        let mut out_shape = values[0].shape().to_vec();
        out_shape[axis] = values.iter().map(|v| v.shape()[axis]).sum();
        let out = Tensor::from_vec(out_shape, data)?;
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        Ok(first.tape().record("concat", parts, Arc::new(out), move |g| {
            let total: usize = blocks.iter().sum();
            let mut offset = 0;
            shapes
                .iter()
                .zip(&blocks)
                .map(|(shape, &b)| {
                    let mut d = Vec::with_capacity(b * outer);
                    for o in 0..outer {
                        let start = o * total + offset;
                        d.extend_from_slice(&g.data()[start..start + b]);
                    }
                    offset += b;
                    Some(Tensor::from_vec(shape.clone(), d).expect("concat grad"))
                })
                .collect()
        }))
    }

    /// Elements `start, start+step, ..` (< `end`) along `axis`; `step >= 1`.
    pub fn slice(self, axis: usize, start: usize, end: usize, step: usize) -> Result<Var<'t>> {
        let x = self.value();
        let rank = x.rank();
        if axis >= rank || step == 0 {
            return Err(TensorError::shape(format!(
                "slice axis {} step {} for rank {}",
                axis, step, rank
            )));
        }
        let len = x.shape()[axis];
        let end = end.min(len);
        let count = if start >= end { 0 } else { (end - start).div_ceil(step) };
        let in_strides = strides(x.shape());
        let mut out_shape = x.shape().to_vec();
        out_shape[axis] = count;
        let mut src_strides = in_strides.clone();
        src_strides[axis] *= step;
        let base = if count == 0 { 0 } else { start * in_strides[axis] };
        let data = strided_gather(x.data(), &out_shape, &src_strides, base);
        let out = Tensor::from_vec(out_shape.clone(), data)?;
        let in_shape = x.shape().to_vec();
        Ok(self.tape().record("slice", &[self], Arc::new(out), move |g| {
            let mut grad = Tensor::zeros(in_shape.clone());
            let targets = {
                let n = numel(&out_shape);
                let mut idx = vec![0usize; out_shape.len()];
                let mut offset = base;
                let mut t = Vec::with_capacity(n);
                for _ in 0..n {
                    t.push(offset);
                    for d in (0..out_shape.len()).rev() {
                        idx[d] += 1;
                        offset += src_strides[d];
                        if idx[d] < out_shape[d] {
                            break;
                        }
                        offset -= src_strides[d] * idx[d];
                        idx[d] = 0;
                    }
                }
                t
            };
            let gd = grad.data_mut();
            for (&t, &v) in targets.iter().zip(g.data()) {
                gd[t] += v;
            }
            vec![Some(grad)]
        }))
    }

    /// Gather entries `indices` along `axis`; repeated indices accumulate
    /// gradient.
    pub fn index_select(self, axis: usize, indices: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        if axis >= x.rank() {
            return Err(TensorError::shape(format!(
                "index_select axis {} for rank {}",
                axis,
                x.rank()
            )));
        }
        let len = x.shape()[axis];
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(TensorError::shape(format!("index {} out of range {}", bad, len)));
        }
        let outer: usize = x.shape()[..axis].iter().product();
        let inner: usize = x.shape()[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                let s = (o * len + i) * inner;
                data.extend_from_slice(&x.data()[s..s + inner]);
            }
        }
        let mut out_shape = x.shape().to_vec();
        out_shape[axis] = indices.len();
        let out = Tensor::from_vec(out_shape, data)?;
        let indices = indices.to_vec();
        let in_shape = x.shape().to_vec();
        Ok(self.tape().record("index_select", &[self], Arc::new(out), move |g| {
            let mut grad = Tensor::zeros(in_shape.clone());
            let gd = grad.data_mut();
            let mut k = 0;
            for o in 0..outer {
                for &i in &indices {
                    let s = (o * len + i) * inner;
                    for (dst, &v) in gd[s..s + inner].iter_mut().zip(&g.data()[k..k + inner]) {
                        *dst += v;
                    }
                    k += inner;
                }
            }
            vec![Some(grad)]
        }))
    }
}
