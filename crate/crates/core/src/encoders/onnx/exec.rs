use std::collections::{HashMap, HashSet};

use stylestroke_tensor::{Tape, TensorError, Var};

use super::graph::{Constant, Graph, Node, Op};
use crate::error::{Error, Result};

fn shape_err(msg: impl Into<String>) -> Error {
    Error::Tensor(TensorError::InvalidShape(msg.into()))
}

fn axis(a: i64, rank: usize) -> Result<usize> {
    let r = rank as i64;
    let v = if a < 0 { a + r } else { a };
    if v < 0 || v >= r.max(1) {
        return Err(shape_err(format!("axis {a} out of range for rank {rank}")));
    }
    Ok(v as usize)
}

struct Env<'g, 't> {
    graph: &'g Graph,
    tape: &'t Tape,
    values: HashMap<&'g str, Var<'t>>,
}

impl<'g, 't> Env<'g, 't> {
    fn var(&mut self, name: &'g str, node: &Node) -> Result<Var<'t>> {
        if let Some(v) = self.values.get(name) {
            return Ok(*v);
        }
        match self.graph.constants.get(name) {
            Some(Constant::Float(t)) => {
                let v = self.tape.constant_arc(t.clone());
                self.values.insert(name, v);
                Ok(v)
            }
            Some(Constant::Int(..)) => Err(Error::UnsupportedOp {
                op: format!("{} with integer tensor operand `{name}`", node.op_type),
                node: node.name.clone(),
            }),
            None => Err(Error::Parse(format!(
                "value `{name}` is not available to node `{}`",
                node.name
            ))),
        }
    }

    fn input(&mut self, node: &'g Node, k: usize) -> Result<Var<'t>> {
        match node.inputs.get(k).filter(|s| !s.is_empty()) {
            Some(name) => self.var(name, node),
            None => Err(Error::Parse(format!("node `{}` is missing input {k}", node.name))),
        }
    }

    fn optional(&mut self, node: &'g Node, k: usize) -> Result<Option<Var<'t>>> {
        match node.inputs.get(k).filter(|s| !s.is_empty()) {
            Some(name) => self.var(name, node).map(Some),
            None => Ok(None),
        }
    }

    fn ints(&self, node: &Node, k: usize) -> Result<Option<Vec<i64>>> {
        match node.inputs.get(k).filter(|s| !s.is_empty()) {
            None => Ok(None),
            Some(name) => match self.graph.constants.get(name.as_str()) {
                Some(Constant::Int(_, v)) => Ok(Some(v.clone())),
                _ => Err(Error::UnsupportedOp {
                    op: format!("{} with non-constant integer input `{name}`", node.op_type),
                    node: node.name.clone(),
                }),
            },
        }
    }

    fn float_const(&self, node: &Node, k: usize) -> Result<std::sync::Arc<stylestroke_tensor::Tensor>> {
        match node.inputs.get(k).and_then(|n| self.graph.constants.get(n.as_str())) {
            Some(Constant::Float(t)) => Ok(t.clone()),
            _ => Err(Error::UnsupportedOp {
                op: format!("{} with non-constant parameter {k}", node.op_type),
                node: node.name.clone(),
            }),
        }
    }

    fn eval(&mut self, node: &'g Node) -> Result<Var<'t>> {
        let x = |env: &mut Self| env.input(node, 0);
        let y = match &node.op {
            Op::Conv(p) => {
                let xv = x(self)?;
                let w = self.input(node, 1)?;
                let b = self.optional(node, 2)?;
                xv.conv2d(w, b, *p)?
            }
            Op::Relu => x(self)?.relu(),
            Op::Gelu => x(self)?.gelu(),
            Op::Sigmoid => x(self)?.sigmoid(),
            Op::Identity => x(self)?,
            Op::MaxPool(p) => x(self)?.max_pool2d(*p)?,
            Op::AveragePool {
                pool,
                count_include_pad,
            } => x(self)?.avg_pool2d(*pool, *count_include_pad)?,
            Op::GlobalAveragePool => {
                let xv = x(self)?;
                let rank = xv.shape().len();
                if rank < 3 {
                    return Err(shape_err("GlobalAveragePool needs rank >= 3"));
                }
                let axes: Vec<usize> = (2..rank).collect();
                xv.reduce_mean(&axes, true)?
            }
            Op::Gemm {
                alpha,
                beta,
                trans_a,
                trans_b,
            } => {
                let mut a = x(self)?;
                let mut b = self.input(node, 1)?;
                if a.shape().len() != 2 || b.shape().len() != 2 {
                    return Err(shape_err("Gemm operands must be 2-D"));
                }
                if *trans_a {
                    a = a.transpose(&[1, 0])?;
                }
                if *trans_b {
                    b = b.transpose(&[1, 0])?;
                }
                let mut out = a.matmul(b)?;
                if *alpha != 1.0 {
                    out = out.mul_scalar(*alpha);
                }
                if let Some(c) = self.optional(node, 2)? {
                    let c = if *beta != 1.0 { c.mul_scalar(*beta) } else { c };
                    out = out.add(c)?;
                }
                out
            }
            Op::MatMul => {
                let a = x(self)?;
                let b = self.input(node, 1)?;
                a.matmul(b)?
            }
            Op::Add | Op::Sub | Op::Mul | Op::Div => {
                let a = x(self)?;
                let b = self.input(node, 1)?;
                match node.op {
                    Op::Add => a.add(b)?,
                    Op::Sub => a.sub(b)?,
                    Op::Mul => a.mul(b)?,
                    _ => a.div(b)?,
                }
            }
            Op::Softmax { axis: ax, legacy } => {
                let xv = x(self)?;
                let shape = xv.shape();
                let k = axis(*ax, shape.len())?;
                if *legacy {
                    let outer: usize = shape[..k].iter().product();
                    let inner: usize = shape[k..].iter().product();
                    xv.reshape(&[outer, inner])?.softmax(1)?.reshape(&shape)?
                } else {
                    xv.softmax(k)?
                }
            }
            Op::LayerNormalization { axis: ax, epsilon } => {
                let xv = x(self)?;
                let k = axis(*ax, xv.shape().len())?;
                let scale = self.input(node, 1)?;
                let mut out = xv.layer_norm(k, *epsilon)?.mul(scale)?;
                if let Some(b) = self.optional(node, 2)? {
                    out = out.add(b)?;
                }
                out
            }
            Op::BatchNormalization { epsilon } => {
                let xv = x(self)?;
                let scale = self.float_const(node, 1)?;
                let bias = self.float_const(node, 2)?;
                let mean = self.float_const(node, 3)?;
                let var = self.float_const(node, 4)?;
                xv.batch_norm_inference(&scale, &bias, &mean, &var, *epsilon)?
            }
            Op::Reshape { allow_zero } => {
                let xv = x(self)?;
                let spec = self
                    .ints(node, 1)?
                    .ok_or_else(|| Error::Parse(format!("Reshape `{}` without shape", node.name)))?;
                let shape = reshape_target(&xv.shape(), &spec, *allow_zero)?;
                xv.reshape(&shape)?
            }
            Op::Transpose { perm } => {
                let xv = x(self)?;
                let rank = xv.shape().len();
                let perm: Vec<usize> = perm.clone().unwrap_or_else(|| (0..rank).rev().collect());
                xv.transpose(&perm)?
            }
            Op::Concat { axis: ax } => {
                let mut parts = Vec::with_capacity(node.inputs.len());
                for k in 0..node.inputs.len() {
                    parts.push(self.input(node, k)?);
                }
                let rank = parts[0].shape().len();
                Var::concat(&parts, axis(*ax, rank)?)?
            }
            Op::Slice => {
                let mut xv = x(self)?;
                let shape = xv.shape();
                let starts = self
                    .ints(node, 1)?
                    .ok_or_else(|| Error::Parse("Slice without starts".into()))?;
                let ends = self
                    .ints(node, 2)?
                    .ok_or_else(|| Error::Parse("Slice without ends".into()))?;
                let axes = self
                    .ints(node, 3)?
                    .unwrap_or_else(|| (0..starts.len() as i64).collect());
                let steps = self.ints(node, 4)?.unwrap_or_else(|| vec![1; starts.len()]);
                if ends.len() != starts.len() || axes.len() != starts.len() || steps.len() != starts.len() {
                    return Err(shape_err("Slice starts/ends/axes/steps lengths differ"));
                }
                for k in 0..starts.len() {
                    let a = axis(axes[k], shape.len())?;
                    if steps[k] <= 0 {
                        return Err(Error::UnsupportedOp {
                            op: "Slice(non-positive step)".into(),
                            node: node.name.clone(),
                        });
                    }
                    let dim = shape[a] as i64;
                    let fix = |v: i64| -> usize {
                        let v = if v < 0 { v + dim } else { v };
                        v.clamp(0, dim) as usize
                    };
                    let (s, e) = (fix(starts[k]), fix(ends[k]));
                    if e <= s {
                        return Err(shape_err(format!("Slice `{}` selects nothing on axis {a}", node.name)));
                    }
                    xv = xv.slice(a, s, e, steps[k] as usize)?;
                }
                xv
            }
            Op::ReduceMean {
                axes,
                keep_dims,
                noop_with_empty_axes,
            } => {
                let xv = x(self)?;
                let rank = xv.shape().len();
                let given = match axes {
                    Some(a) => Some(a.clone()),
                    None => self.ints(node, 1)?,
                };
                let axes: Vec<usize> = match given {
                    Some(a) if !a.is_empty() => a.iter().map(|&v| axis(v, rank)).collect::<Result<_>>()?,
                    _ if *noop_with_empty_axes => return Ok(xv),
                    _ => (0..rank).collect(),
                };
                xv.reduce_mean(&axes, *keep_dims)?
            }
            Op::Flatten { axis: ax } => {
                let xv = x(self)?;
                let shape = xv.shape();
                let r = shape.len() as i64;
                let k = if *ax < 0 { ax + r } else { *ax };
                if k < 0 || k > r {
                    return Err(shape_err(format!("Flatten axis {ax} for rank {r}")));
                }
                let outer: usize = shape[..k as usize].iter().product();
                let inner: usize = shape[k as usize..].iter().product();
                xv.reshape(&[outer, inner])?
            }
        };
        Ok(y)
    }
}

fn reshape_target(input: &[usize], spec: &[i64], allow_zero: bool) -> Result<Vec<usize>> {
    let total: usize = input.iter().product();
    let mut out = Vec::with_capacity(spec.len());
    let mut infer = None;
    for (k, &s) in spec.iter().enumerate() {
        match s {
            -1 if infer.is_none() => {
                infer = Some(k);
                out.push(1);
            }
            0 if !allow_zero => out.push(
                *input
                    .get(k)
                    .ok_or_else(|| shape_err(format!("Reshape copies missing dim {k}")))?,
            ),
            s if s >= 0 => out.push(s as usize),
            _ => return Err(shape_err(format!("bad Reshape target {spec:?}"))),
        }
    }
    if let Some(k) = infer {
        let known: usize = out.iter().product();
        if known == 0 || !total.is_multiple_of(known) {
            return Err(shape_err(format!("cannot reshape {input:?} to {spec:?}")));
        }
        out[k] = total / known;
    }
    Ok(out)
}

impl Graph {
    /// Evaluate the nodes needed for `wanted` on `tape`, feeding the graph
    /// inputs from `feeds`. Returns the wanted values in order.
    pub fn run<'t>(&self, tape: &'t Tape, feeds: &[(&str, Var<'t>)], wanted: &[&str]) -> Result<Vec<Var<'t>>> {
        let mut env = Env {
            graph: self,
            tape,
            values: HashMap::new(),
        };
        for input in &self.inputs {
            let (_, v) = feeds
                .iter()
                .find(|(n, _)| *n == input.name)
                .ok_or_else(|| Error::config(format!("graph input `{}` was not provided", input.name)))?;
            let shape = v.shape();
            let fits = input.dims.is_empty()
                || (input.dims.len() == shape.len()
                    && input.dims.iter().zip(&shape).all(|(d, s)| d.is_none_or(|d| d == *s)));
            if !fits {
                return Err(shape_err(format!(
                    "input `{}` has shape {:?}, graph declares {:?}",
                    input.name, shape, input.dims
                )));
            }
            env.values.insert(input.name.as_str(), *v);
        }

        let mut needed: HashSet<&str> = wanted.iter().copied().collect();
        let mut active = vec![false; self.nodes.len()];
        for (k, n) in self.nodes.iter().enumerate().rev() {
            if n.outputs.iter().any(|o| needed.contains(o.as_str())) {
                active[k] = true;
                needed.extend(n.inputs.iter().filter(|i| !i.is_empty()).map(String::as_str));
            }
        }
        for (k, n) in self.nodes.iter().enumerate() {
            if !active[k] {
                continue;
            }
            let y = env.eval(n)?;
            env.values.insert(n.outputs[0].as_str(), y);
        }
        wanted
            .iter()
            .map(|w| {
                env.values
                    .get(w)
                    .copied()
                    .or_else(|| match self.constants.get(*w) {
                        Some(Constant::Float(t)) => Some(tape.constant_arc(t.clone())),
                        _ => None,
                    })
                    .ok_or_else(|| Error::config(format!("graph has no value named `{w}`")))
            })
            .collect()
    }
}
