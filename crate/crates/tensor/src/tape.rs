//! Reverse-mode gradient tape.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles in creation
//! order. Node inputs always precede the node, so the tape is acyclic and a
//! single reverse sweep computes all gradients. Tapes are meant to be built
//! for one optimization iteration and dropped after `backward`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub type NodeId = usize;

/// Vector-Jacobian product of one node: maps the gradient of the node output
/// to one optional gradient per input (in input order).
pub type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Option<Tensor>> + Send>;

struct Node {
    value: Arc<Tensor>,
    requires_grad: bool,
    leaf: bool,
    op: &'static str,
    inputs: Vec<NodeId>,
    backward: Option<BackwardFn>,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that receives a gradient from `backward`.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(Node {
            value: Arc::new(value),
            requires_grad: true,
            leaf: true,
            op: "leaf",
            inputs: Vec::new(),
            backward: None,
        })
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.constant_arc(Arc::new(value))
    }

    pub fn constant_arc(&self, value: Arc<Tensor>) -> Var<'_> {
        self.push(Node {
            value,
            requires_grad: false,
            leaf: true,
            op: "constant",
            inputs: Vec::new(),
            backward: None,
        })
    }

    /// Record an operation. `backward` is kept only when some input requires
    /// gradients; it must return one entry per input.
    pub fn record<'t, F>(&'t self, op: &'static str, inputs: &[Var<'t>], value: Arc<Tensor>, backward: F) -> Var<'t>
    where
        F: Fn(&Tensor) -> Vec<Option<Tensor>> + Send + 'static,
    {
        let requires_grad = inputs.iter().any(|v| v.requires_grad());
        self.push(Node {
            value,
            requires_grad,
            leaf: false,
            op,
            inputs: inputs.iter().map(|v| v.id).collect(),
            backward: if requires_grad { Some(Box::new(backward)) } else { None },
        })
    }

    fn push(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Backpropagate from a scalar `root`.
    ///
    /// Every gradient-requiring leaf gets an entry in the result; leaves the
    /// root does not depend on get zeros.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root_node = &nodes[root.id];
        if root_node.value.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                root_node.value.shape()
            )));
        }

        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(root.id + 1);
        grads.resize_with(root.id + 1, || None);
        grads[root.id] = Some(Tensor::ones(root_node.value.shape().to_vec()));

        let mut leaves = HashMap::new();
        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if node.leaf {
                leaves.insert(id, g);
                continue;
            }
            let backward = node
                .backward
                .as_ref()
                .expect("gradient-requiring op node without backward");
            let input_grads = backward(&g);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "op {}", node.op);
            for (&input, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !nodes[input].requires_grad {
                    continue;
                }
                debug_assert_eq!(
                    ig.shape(),
                    nodes[input].value.shape(),
                    "gradient shape from op {}",
                    node.op
                );
                match &mut grads[input] {
                    Some(acc) => acc.accumulate(&ig),
                    slot => *slot = Some(ig),
                }
            }
        }

        for (id, node) in nodes.iter().enumerate() {
            if node.leaf && node.requires_grad {
                leaves
                    .entry(id)
                    .or_insert_with(|| Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        Ok(Gradients { map: leaves })
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = self.nodes.borrow();
        f.debug_list()
            .entries(nodes.iter().enumerate().map(|(i, n)| (i, n.op, &n.inputs)))
            .finish()
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    map: HashMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.map.get(&var.id)
    }

    /// Gradient of a leaf, panicking if `var` is not a gradient-requiring leaf.
    pub fn wrt(&self, var: Var<'_>) -> &Tensor {
        self.get(var).expect("no gradient recorded for this variable")
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.numel()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    pub fn item(&self) -> Result<f32> {
        self.value().item()
    }

    pub fn op_name(&self) -> &'static str {
        self.tape.nodes.borrow()[self.id].op
    }
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({:?})", self.id, self.value())
    }
}
