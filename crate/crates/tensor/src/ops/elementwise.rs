use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::{broadcast_index_map, broadcast_shape, pairwise_sum, reduce_to_shape, Tensor};

const SQRT_2: f32 = std::f32::consts::SQRT_2;
const INV_SQRT_2PI: f32 = 0.398_942_3;

/// Partial derivatives of a binary op, evaluated at `(a, b)`.
type Partials = fn(f32, f32) -> (f32, f32);

fn binary<'t>(a: Var<'t>, b: Var<'t>, op: &'static str, f: fn(f32, f32) -> f32, partials: Partials) -> Result<Var<'t>> {
    let av = a.value();
    let bv = b.value();
    let out_shape = broadcast_shape(av.shape(), bv.shape())?;
    let same = av.shape() == bv.shape();
    let out = if same {
        av.zip_map(&bv, f)
    } else {
        let ia = broadcast_index_map(av.shape(), &out_shape);
        let ib = broadcast_index_map(bv.shape(), &out_shape);
        let data = ia
            .iter()
            .zip(&ib)
            .map(|(&i, &j)| f(av.data()[i], bv.data()[j]))
            .collect();
        Tensor::from_vec(out_shape.clone(), data)?
    };
    let (need_a, need_b) = (a.requires_grad(), b.requires_grad());
    Ok(a.tape().record(op, &[a, b], Arc::new(out), move |g| {
        let n = g.numel();
        let mut ga = if need_a { Vec::with_capacity(n) } else { Vec::new() };
        let mut gb = if need_b { Vec::with_capacity(n) } else { Vec::new() };
        let (ia, ib) = if same {
            (None, None)
        } else {
            (
                Some(broadcast_index_map(av.shape(), g.shape())),
                Some(broadcast_index_map(bv.shape(), g.shape())),
            )
        };
        for k in 0..n {
            let x = av.data()[ia.as_ref().map_or(k, |m| m[k])];
            let y = bv.data()[ib.as_ref().map_or(k, |m| m[k])];
            let (da, db) = partials(x, y);
            let gk = g.data()[k];
            if need_a {
                ga.push(gk * da);
            }
            if need_b {
                gb.push(gk * db);
            }
        }
        let to_input = |data: Vec<f32>, shape: &[usize]| {
            let full = Tensor::from_vec(g.shape().to_vec(), data).expect("grad shape");
            reduce_to_shape(&full, shape)
        };
        vec![
            need_a.then(|| to_input(ga, av.shape())),
            need_b.then(|| to_input(gb, bv.shape())),
        ]
    }))
}

/// Unary op whose derivative is expressed through input `x` and output `y`.
fn unary<'t>(
    a: Var<'t>,
    op: &'static str,
    f: impl Fn(f32) -> f32,
    dfdx: impl Fn(f32, f32) -> f32 + Send + 'static,
) -> Var<'t> {
    let x = a.value();
    let y = Arc::new(x.map(f));
    let saved = y.clone();
    a.tape().record(op, &[a], y, move |g| {
        let data = g
            .data()
            .iter()
            .zip(x.data().iter().zip(saved.data()))
            .map(|(&gk, (&xk, &yk))| gk * dfdx(xk, yk))
            .collect();
        vec![Some(Tensor::from_vec(g.shape().to_vec(), data).expect("grad shape"))]
    })
}

fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x / SQRT_2))
}

fn gelu_grad(x: f32) -> f32 {
    0.5 * (1.0 + libm::erff(x / SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Var<'t> {
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        binary(self, other, "add", |a, b| a + b, |_, _| (1.0, 1.0))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        binary(self, other, "sub", |a, b| a - b, |_, _| (1.0, -1.0))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        binary(self, other, "mul", |a, b| a * b, |a, b| (b, a))
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        binary(self, other, "div", |a, b| a / b, |a, b| (1.0 / b, -a / (b * b)))
    }

    pub fn neg(self) -> Var<'t> {
        unary(self, "neg", |x| -x, |_, _| -1.0)
    }

    pub fn relu(self) -> Var<'t> {
        unary(self, "relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(self) -> Var<'t> {
        unary(self, "gelu", gelu, |x, _| gelu_grad(x))
    }

    pub fn sigmoid(self) -> Var<'t> {
        unary(self, "sigmoid", sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn exp(self) -> Var<'t> {
        unary(self, "exp", f32::exp, |_, y| y)
    }

    pub fn log(self) -> Result<Var<'t>> {
        check_domain(self, "log")?;
        Ok(unary(self, "log", f32::ln, |x, _| 1.0 / x))
    }

    pub fn sqrt(self) -> Result<Var<'t>> {
        check_domain(self, "sqrt")?;
        Ok(unary(self, "sqrt", f32::sqrt, |_, y| 0.5 / y))
    }

    pub fn powf(self, p: f32) -> Var<'t> {
        unary(self, "pow", move |x| x.powf(p), move |x, _| p * x.powf(p - 1.0))
    }

    pub fn add_scalar(self, k: f32) -> Var<'t> {
        unary(self, "add_scalar", move |x| x + k, |_, _| 1.0)
    }

    pub fn mul_scalar(self, k: f32) -> Var<'t> {
        unary(self, "mul_scalar", move |x| x * k, move |_, _| k)
    }

    pub fn sum_all(self) -> Var<'t> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let out = Tensor::scalar(pairwise_sum(x.data()));
        self.tape().record("sum_all", &[self], Arc::new(out), move |g| {
            vec![Some(Tensor::full(shape.clone(), g.data()[0]))]
        })
    }

    pub fn mean_all(self) -> Var<'t> {
        let n = self.numel().max(1) as f32;
        self.sum_all().mul_scalar(1.0 / n)
    }
}

fn check_domain(v: Var<'_>, op: &'static str) -> Result<()> {
    let x = v.value();
    if let Some(bad) = x.data().iter().find(|&&x| x < 0.0 || x.is_nan()) {
        return Err(TensorError::Domain {
            op,
            detail: format!("negative input {bad}"),
        });
    }
    Ok(())
}
