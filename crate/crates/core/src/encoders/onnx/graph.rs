use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use prost::Message;
use stylestroke_tensor::{Conv2dParams, Pool2dParams, Tensor};

use super::proto::{self, AttributeProto, NodeProto, TensorProto};
use crate::error::{Error, Result};

/// A constant value: float tensors go on the tape, integer tensors only feed
/// shape-like operands (Reshape shapes, Slice bounds, axes).
#[derive(Debug, Clone)]
pub enum Constant {
    Float(Arc<Tensor>),
    Int(Vec<usize>, Vec<i64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Conv(Conv2dParams),
    Relu,
    Gelu,
    Sigmoid,
    Identity,
    MaxPool(Pool2dParams),
    AveragePool {
        pool: Pool2dParams,
        count_include_pad: bool,
    },
    GlobalAveragePool,
    Gemm {
        alpha: f32,
        beta: f32,
        trans_a: bool,
        trans_b: bool,
    },
    MatMul,
    Add,
    Sub,
    Mul,
    Div,
    /// `legacy`: opset < 13 semantics (coerce to 2-D at `axis`).
    Softmax {
        axis: i64,
        legacy: bool,
    },
    LayerNormalization {
        axis: i64,
        epsilon: f32,
    },
    BatchNormalization {
        epsilon: f32,
    },
    Reshape {
        allow_zero: bool,
    },
    Transpose {
        perm: Option<Vec<usize>>,
    },
    Concat {
        axis: i64,
    },
    Slice,
    ReduceMean {
        axes: Option<Vec<i64>>,
        keep_dims: bool,
        noop_with_empty_axes: bool,
    },
    Flatten {
        axis: i64,
    },
}

#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub op_type: String,
    pub op: Op,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct GraphInput {
    pub name: String,
    /// `None` for symbolic dimensions.
    pub dims: Vec<Option<usize>>,
}

/// A loaded, immutable ONNX graph.
#[derive(Debug, Clone)]
pub struct Graph {
    pub nodes: Vec<Node>,
    pub constants: HashMap<String, Constant>,
    pub inputs: Vec<GraphInput>,
    pub outputs: Vec<String>,
    pub opset: i64,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn usize_dims(dims: &[i64]) -> Result<Vec<usize>> {
    dims.iter()
        .map(|&d| usize::try_from(d).map_err(|_| parse_err(format!("negative dimension {d}"))))
        .collect()
}

pub(crate) fn tensor_from_proto(t: &TensorProto) -> Result<Constant> {
    if t.data_location == 1 {
        return Err(parse_err(format!(
            "tensor `{}` uses external data, which is not supported",
            t.name
        )));
    }
    let dims = usize_dims(&t.dims)?;
    let n: usize = dims.iter().product();
    let raw = &t.raw_data;
    let out = match t.data_type {
        proto::FLOAT => {
            let data: Vec<f32> = if !raw.is_empty() {
                raw.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect()
            } else {
                t.float_data.clone()
            };
            Constant::Float(Arc::new(tensor_checked(&t.name, dims, data, n)?))
        }
        proto::DOUBLE => {
            let data: Vec<f32> = if !raw.is_empty() {
                raw.chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")) as f32)
                    .collect()
            } else {
                t.double_data.iter().map(|&v| v as f32).collect()
            };
            Constant::Float(Arc::new(tensor_checked(&t.name, dims, data, n)?))
        }
        proto::INT64 | proto::INT32 => {
            let data: Vec<i64> = if !raw.is_empty() {
                if t.data_type == proto::INT64 {
                    raw.chunks_exact(8)
                        .map(|b| i64::from_le_bytes(b.try_into().expect("8 bytes")))
                        .collect()
                } else {
                    raw.chunks_exact(4)
                        .map(|b| i32::from_le_bytes(b.try_into().expect("4 bytes")) as i64)
                        .collect()
                }
            } else if t.data_type == proto::INT64 {
                t.int64_data.clone()
            } else {
                t.int32_data.iter().map(|&v| v as i64).collect()
            };
            if data.len() != n {
                return Err(parse_err(format!(
                    "tensor `{}` has {} values for dims {:?}",
                    t.name,
                    data.len(),
                    dims
                )));
            }
            Constant::Int(dims, data)
        }
        other => {
            return Err(parse_err(format!(
                "tensor `{}` has unsupported data type {other}",
                t.name
            )))
        }
    };
    Ok(out)
}

fn tensor_checked(name: &str, dims: Vec<usize>, data: Vec<f32>, n: usize) -> Result<Tensor> {
    if data.len() != n {
        return Err(parse_err(format!(
            "tensor `{name}` has {} values for dims {:?}",
            data.len(),
            dims
        )));
    }
    Ok(Tensor::from_vec(dims, data)?)
}

struct Attrs<'a>(HashMap<&'a str, &'a AttributeProto>);

impl<'a> Attrs<'a> {
    fn new(node: &'a NodeProto) -> Self {
        Attrs(node.attribute.iter().map(|a| (a.name.as_str(), a)).collect())
    }
    fn int(&self, name: &str, default: i64) -> i64 {
        self.0.get(name).map_or(default, |a| a.i)
    }
    fn float(&self, name: &str, default: f32) -> f32 {
        self.0.get(name).map_or(default, |a| a.f)
    }
    fn ints(&self, name: &str) -> Option<Vec<i64>> {
        self.0.get(name).map(|a| a.ints.clone())
    }
    fn string(&self, name: &str) -> Option<String> {
        self.0.get(name).map(|a| String::from_utf8_lossy(&a.s).into_owned())
    }
}

fn pair(v: Option<Vec<i64>>, default: usize, what: &str) -> Result<[usize; 2]> {
    match v {
        None => Ok([default; 2]),
        Some(v) if v.len() == 2 && v.iter().all(|&x| x >= 0) => Ok([v[0] as usize, v[1] as usize]),
        Some(v) => Err(parse_err(format!("{what} must be two non-negative ints, got {v:?}"))),
    }
}

/// ONNX pads are [top, left, bottom, right] for 2-D.
fn pads4(attrs: &Attrs, op: &str) -> Result<[usize; 4]> {
    if let Some(p) = attrs.string("auto_pad") {
        if p != "NOTSET" && !p.is_empty() {
            return Err(Error::UnsupportedOp {
                op: format!("{op}(auto_pad={p})"),
                node: String::new(),
            });
        }
    }
    match attrs.ints("pads") {
        None => Ok([0; 4]),
        Some(v) if v.len() == 4 && v.iter().all(|&x| x >= 0) => {
            Ok([v[0] as usize, v[1] as usize, v[2] as usize, v[3] as usize])
        }
        Some(v) => Err(parse_err(format!("pads must be four non-negative ints, got {v:?}"))),
    }
}

fn parse_op(node: &NodeProto, opset: i64) -> Result<Op> {
    let a = Attrs::new(node);
    let unsupported = |detail: &str| Error::UnsupportedOp {
        op: format!("{}({detail})", node.op_type),
        node: node.name.clone(),
    };
    if !node.domain.is_empty() && node.domain != "ai.onnx" {
        return Err(Error::UnsupportedOp {
            op: format!("{}::{}", node.domain, node.op_type),
            node: node.name.clone(),
        });
    }
    let op = match node.op_type.as_str() {
        "Conv" => {
            if a.int("group", 1) != 1 {
                return Err(unsupported("group != 1"));
            }
            Op::Conv(Conv2dParams {
                stride: pair(a.ints("strides"), 1, "strides")?,
                pads: pads4(&a, "Conv")?,
                dilation: pair(a.ints("dilations"), 1, "dilations")?,
            })
        }
        "Relu" => Op::Relu,
        "Gelu" => {
            if a.string("approximate").is_some_and(|s| s != "none") {
                return Err(unsupported("approximate=tanh"));
            }
            Op::Gelu
        }
        "Sigmoid" => Op::Sigmoid,
        "Identity" | "Dropout" => Op::Identity,
        "MaxPool" | "AveragePool" => {
            if a.int("ceil_mode", 0) != 0 {
                return Err(unsupported("ceil_mode=1"));
            }
            if node.output.len() > 1 && node.output[1..].iter().any(|o| !o.is_empty()) {
                return Err(unsupported("indices output"));
            }
            let kernel = pair(a.ints("kernel_shape"), 0, "kernel_shape")?;
            if kernel.contains(&0) {
                return Err(parse_err(format!("node `{}` needs a 2-D kernel_shape", node.name)));
            }
            let pool = Pool2dParams {
                kernel,
                stride: pair(a.ints("strides"), 1, "strides")?,
                pads: pads4(&a, &node.op_type)?,
            };
            if node.op_type == "MaxPool" {
                if pair(a.ints("dilations"), 1, "dilations")? != [1, 1] {
                    return Err(unsupported("dilations"));
                }
                Op::MaxPool(pool)
            } else {
                Op::AveragePool {
                    pool,
                    count_include_pad: a.int("count_include_pad", 0) != 0,
                }
            }
        }
        "GlobalAveragePool" => Op::GlobalAveragePool,
        "Gemm" => Op::Gemm {
            alpha: a.float("alpha", 1.0),
            beta: a.float("beta", 1.0),
            trans_a: a.int("transA", 0) != 0,
            trans_b: a.int("transB", 0) != 0,
        },
        "MatMul" => Op::MatMul,
        "Add" => Op::Add,
        "Sub" => Op::Sub,
        "Mul" => Op::Mul,
        "Div" => Op::Div,
        "Softmax" => {
            let legacy = opset < 13;
            Op::Softmax {
                axis: a.int("axis", if legacy { 1 } else { -1 }),
                legacy,
            }
        }
        "LayerNormalization" => {
            if a.int("stash_type", 1) != 1 {
                return Err(unsupported("stash_type"));
            }
            Op::LayerNormalization {
                axis: a.int("axis", -1),
                epsilon: a.float("epsilon", 1e-5),
            }
        }
        "BatchNormalization" => {
            if a.int("training_mode", 0) != 0 {
                return Err(unsupported("training_mode=1"));
            }
            Op::BatchNormalization {
                epsilon: a.float("epsilon", 1e-5),
            }
        }
        "Reshape" => Op::Reshape {
            allow_zero: a.int("allowzero", 0) != 0,
        },
        "Transpose" => Op::Transpose {
            perm: a.ints("perm").map(|p| usize_dims(&p)).transpose()?,
        },
        "Concat" => Op::Concat { axis: a.int("axis", 0) },
        "Slice" => {
            if opset < 10 {
                return Err(unsupported("opset < 10 attribute form"));
            }
            Op::Slice
        }
        "ReduceMean" => Op::ReduceMean {
            axes: a.ints("axes"),
            keep_dims: a.int("keepdims", 1) != 0,
            noop_with_empty_axes: a.int("noop_with_empty_axes", 0) != 0,
        },
        "Flatten" => Op::Flatten { axis: a.int("axis", 1) },
        _ => {
            return Err(Error::UnsupportedOp {
                op: node.op_type.clone(),
                node: node.name.clone(),
            })
        }
    };
    Ok(op)
}

impl Graph {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let model = proto::ModelProto::decode(bytes).map_err(|e| parse_err(format!("not an ONNX model: {e}")))?;
        let g = model.graph.ok_or_else(|| parse_err("model has no graph"))?;
        let opset = model
            .opset_import
            .iter()
            .filter(|o| o.domain.is_empty() || o.domain == "ai.onnx")
            .map(|o| o.version)
            .max()
            .unwrap_or(13);

        let mut constants = HashMap::new();
        for t in &g.initializer {
            constants.insert(t.name.clone(), tensor_from_proto(t)?);
        }
        let inputs: Vec<GraphInput> = g
            .input
            .iter()
            .filter(|v| !constants.contains_key(&v.name))
            .map(|v| {
                let dims = v
                    .r#type
                    .as_ref()
                    .and_then(|t| t.tensor_type.as_ref())
                    .and_then(|t| t.shape.as_ref())
                    .map(|s| {
                        s.dim
                            .iter()
                            .map(|d| d.dim_value.and_then(|x| usize::try_from(x).ok()).filter(|&x| x > 0))
                            .collect()
                    })
                    .unwrap_or_default();
                GraphInput {
                    name: v.name.clone(),
                    dims,
                }
            })
            .collect();
        if inputs.is_empty() {
            return Err(parse_err("graph declares no runtime input"));
        }

        let mut defined: HashSet<String> = constants.keys().cloned().collect();
        defined.extend(inputs.iter().map(|i| i.name.clone()));
        let mut nodes = Vec::with_capacity(g.node.len());
        for (k, n) in g.node.iter().enumerate() {
            let name = if n.name.is_empty() {
                format!("{}_{k}", n.op_type)
            } else {
                n.name.clone()
            };
            if n.op_type == "Constant" {
                let t = n
                    .attribute
                    .iter()
                    .find(|a| a.name == "value")
                    .and_then(|a| a.t.as_ref())
                    .ok_or_else(|| Error::UnsupportedOp {
                        op: "Constant(non-tensor value)".into(),
                        node: name.clone(),
                    })?;
                let out = n.output.first().ok_or_else(|| parse_err("Constant without output"))?;
                constants.insert(out.clone(), tensor_from_proto(t)?);
                defined.insert(out.clone());
                continue;
            }
            let mut proto_node = n.clone();
            proto_node.name = name.clone();
            let op = parse_op(&proto_node, opset).map_err(|e| match e {
                Error::UnsupportedOp { op, .. } => Error::UnsupportedOp { op, node: name.clone() },
                other => other,
            })?;
            for i in n.input.iter().filter(|i| !i.is_empty()) {
                if !defined.contains(i) {
                    return Err(parse_err(format!(
                        "node `{name}` reads `{i}` before it is produced (graph must be topologically sorted)"
                    )));
                }
            }
            let outputs: Vec<String> = n.output.iter().filter(|o| !o.is_empty()).cloned().collect();
            defined.extend(outputs.iter().cloned());
            nodes.push(Node {
                name,
                op_type: n.op_type.clone(),
                op,
                inputs: n.input.clone(),
                outputs,
            });
        }
        let outputs: Vec<String> = g.output.iter().map(|o| o.name.clone()).collect();
        for o in &outputs {
            if !defined.contains(o) {
                return Err(parse_err(format!("graph output `{o}` is never produced")));
            }
        }
        Ok(Graph {
            nodes,
            constants,
            inputs,
            outputs,
            opset,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Names of every value a node produces, in graph order.
    pub fn value_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .flat_map(|n| n.outputs.iter().map(String::as_str))
            .collect()
    }
}
