use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Work (m·k·n) above which row blocks are spread across threads.
const PAR_THRESHOLD: usize = 1 << 16;

/// `out[m×n] = a[m×k] · b[k×n]`, accumulating each output in `k` order.
pub fn matmul_into(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let row = |(i, out_row): (usize, &mut [f32])| {
        out_row.iter_mut().for_each(|v| *v = 0.0);
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &aip) in a_row.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    };
    if n == 0 {
        return;
    }
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
}

/// Transpose of a row-major `rows × cols` matrix.
pub fn transpose2d(a: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

struct MatmulPlan {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a_batched: bool,
    b_batched: bool,
    out_shape: Vec<usize>,
}

fn plan(a: &[usize], b: &[usize]) -> Result<MatmulPlan> {
    if a.len() < 2 || b.len() < 2 {
        return Err(TensorError::shape(format!(
            "matmul needs rank >= 2 operands, got {:?} and {:?}",
            a, b
        )));
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(TensorError::shape(format!(
            "matmul inner dimensions differ: {:?} x {:?}",
            a, b
        )));
    }
    let a_batch = &a[..a.len() - 2];
    let b_batch = &b[..b.len() - 2];
    let batch_shape = match (a_batch.is_empty(), b_batch.is_empty()) {
        (_, true) => a_batch.to_vec(),
        (true, false) => b_batch.to_vec(),
        (false, false) if a_batch == b_batch => a_batch.to_vec(),
        _ => {
            return Err(TensorError::shape(format!(
                "matmul batch dimensions differ: {:?} x {:?}",
                a, b
            )))
        }
    };
    let mut out_shape = batch_shape.clone();
    out_shape.extend([m, n]);
    Ok(MatmulPlan {
        batch: batch_shape.iter().product(),
        m,
        k,
        n,
        a_batched: !a_batch.is_empty(),
        b_batched: !b_batch.is_empty(),
        out_shape,
    })
}

impl<'t> Var<'t> {
    /// Matrix product over the last two axes. Leading batch axes must match,
    /// or one operand may be a plain matrix shared across the batch.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let av = self.value();
        let bv = other.value();
        let p = plan(av.shape(), bv.shape())?;
        let (m, k, n) = (p.m, p.k, p.n);
        let mut out = vec![0.0; p.batch * m * n];
        for bi in 0..p.batch {
            let a = if p.a_batched {
                &av.data()[bi * m * k..(bi + 1) * m * k]
            } else {
                av.data()
            };
            let b = if p.b_batched {
                &bv.data()[bi * k * n..(bi + 1) * k * n]
            } else {
                bv.data()
            };
            matmul_into(a, b, &mut out[bi * m * n..(bi + 1) * m * n], m, k, n);
        }
        let out = Tensor::from_vec(p.out_shape.clone(), out)?;
        let (need_a, need_b) = (self.requires_grad(), other.requires_grad());
        Ok(self.tape().record("matmul", &[self, other], Arc::new(out), move |g| {
            let mut ga = need_a.then(|| vec![0.0; av.numel()]);
            let mut gb = need_b.then(|| vec![0.0; bv.numel()]);
            let mut tmp_a = vec![0.0; m * k];
            let mut tmp_b = vec![0.0; k * n];
            for bi in 0..p.batch {
                let gblk = &g.data()[bi * m * n..(bi + 1) * m * n];
                let a = if p.a_batched {
                    &av.data()[bi * m * k..(bi + 1) * m * k]
                } else {
                    av.data()
                };
                let b = if p.b_batched {
                    &bv.data()[bi * k * n..(bi + 1) * k * n]
                } else {
                    bv.data()
                };
                if let Some(ga) = ga.as_mut() {
                    // dA = G · Bᵀ
                    let bt = transpose2d(b, k, n);
                    matmul_into(gblk, &bt, &mut tmp_a, m, n, k);
                    let dst = if p.a_batched {
                        &mut ga[bi * m * k..(bi + 1) * m * k]
                    } else {
                        &mut ga[..]
                    };
                    dst.iter_mut().zip(&tmp_a).for_each(|(d, s)| *d += s);
                }
                if let Some(gb) = gb.as_mut() {
                    // dB = Aᵀ · G
                    let at = transpose2d(a, m, k);
                    matmul_into(&at, gblk, &mut tmp_b, k, m, n);
                    let dst = if p.b_batched {
                        &mut gb[bi * k * n..(bi + 1) * k * n]
                    } else {
                        &mut gb[..]
                    };
                    dst.iter_mut().zip(&tmp_b).for_each(|(d, s)| *d += s);
                }
            }
            vec![
                ga.map(|d| Tensor::from_vec(av.shape().to_vec(), d).expect("grad shape")),
                gb.map(|d| Tensor::from_vec(bv.shape().to_vec(), d).expect("grad shape")),
            ]
        }))
    }
}
