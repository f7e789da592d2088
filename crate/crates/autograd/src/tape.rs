//! Wengert-list recording of forward operations and their reverse sweep.
//!
//! A [`Tape`] owns every value produced during a forward pass. Operations
//! append nodes in execution order, so node ids are already a topological
//! order; [`Tape::backward`] walks them in reverse once, accumulating
//! gradients additively where a value fans out.

use std::cell::{Ref, RefCell};

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub type NodeId = usize;

/// Everything a vector-Jacobian product may look at.
pub struct BackwardCtx<'a, T: Scalar> {
    pub grad_out: &'a Tensor<T>,
    pub inputs: &'a [&'a Tensor<T>],
    pub output: &'a Tensor<T>,
    /// Which inputs need a gradient; others may be returned as `None`.
    pub needs: &'a [bool],
}

/// Reverse rule of one recorded operation.
pub trait Backward<T: Scalar> {
    fn name(&self) -> &'static str;

    /// One entry per input, each shaped like that input.
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>>;
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    inputs: Vec<NodeId>,
    op: Option<Box<dyn Backward<T>>>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

#[derive(Default)]
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a value recorded on a [`Tape`].
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    id: NodeId,
}

impl<T: Scalar> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Scalar> Copy for Var<'_, T> {}

impl<T: Scalar> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.shape())
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable input whose gradient is kept after [`Tape::backward`].
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(value, true)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(value, false)
    }

    fn push_leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            inputs: Vec::new(),
            op: None,
            requires_grad,
            grad: None,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Appends the result of an operation. Non-finite outputs are rejected.
    pub fn record(
        &self,
        op_name: &'static str,
        value: Tensor<T>,
        inputs: &[Var<'_, T>],
        op: impl Backward<T> + 'static,
    ) -> Result<Var<'_, T>> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = inputs.iter().any(|v| nodes[v.id].requires_grad);
        nodes.push(Node {
            value,
            inputs: inputs.iter().map(|v| v.id).collect(),
            op: requires_grad.then(|| Box::new(op) as Box<dyn Backward<T>>),
            requires_grad,
            grad: None,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    pub fn value(&self, id: NodeId) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Accumulated gradient of a node; `None` before any backward reached it.
    pub fn grad(&self, id: NodeId) -> Option<Tensor<T>> {
        self.nodes.borrow()[id].grad.clone()
    }

    pub fn zero_grad(&self) {
        for node in self.nodes.borrow_mut().iter_mut() {
            node.grad = None;
        }
    }

    /// Reverse sweep from a scalar `loss`. Gradients are added to those of
    /// earlier sweeps until [`Tape::zero_grad`]; only nodes recorded with
    /// `requires_grad` receive one.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<()> {
        let mut leaf_grads: Vec<(NodeId, Tensor<T>)> = Vec::new();
        {
            let nodes = self.nodes.borrow();
            let root = &nodes[loss.id];
            if root.value.numel() != 1 {
                return Err(TensorError::Contract(format!(
                    "backward needs a scalar loss, got shape {:?}",
                    root.value.shape()
                )));
            }
            if !root.requires_grad {
                return Err(TensorError::Contract(
                    "loss does not depend on any parameter".into(),
                ));
            }
            let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.id + 1];
            grads[loss.id] = Some(Tensor::ones(root.value.shape()));

            for id in (0..=loss.id).rev() {
                let Some(grad_out) = grads[id].take() else {
                    continue;
                };
                let node = &nodes[id];
                let Some(op) = &node.op else {
                    if node.requires_grad {
                        leaf_grads.push((id, grad_out));
                    }
                    continue;
                };
                let inputs: Vec<&Tensor<T>> =
                    node.inputs.iter().map(|&i| &nodes[i].value).collect();
                let needs: Vec<bool> = node
                    .inputs
                    .iter()
                    .map(|&i| nodes[i].requires_grad)
                    .collect();
                let ctx = BackwardCtx {
                    grad_out: &grad_out,
                    inputs: &inputs,
                    output: &node.value,
                    needs: &needs,
                };
                let input_grads = op.backward(&ctx);
                debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", op.name());
                for ((&input, g), &need) in node.inputs.iter().zip(input_grads).zip(&needs) {
                    let Some(g) = g else { continue };
                    if !need {
                        continue;
                    }
                    debug_assert_eq!(g.shape(), nodes[input].value.shape(), "{}", op.name());
                    match &mut grads[input] {
                        Some(acc) => acc.add_assign(&g),
                        slot @ None => *slot = Some(g),
                    }
                }
            }
        }
        let mut nodes = self.nodes.borrow_mut();
        for (id, g) in leaf_grads {
            match &mut nodes[id].grad {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    /// Borrowed value. The borrow must end before new nodes are recorded;
    /// use [`Var::to_tensor`] to keep a copy.
    pub fn value(&self) -> Ref<'t, Tensor<T>> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        self.value().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    pub fn grad(&self) -> Option<Tensor<T>> {
        self.tape.grad(self.id)
    }

    /// Scalar value of a one-element var.
    pub fn item(&self) -> T {
        self.value().item()
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var<'t, T> {
        self.tape.constant(self.to_tensor())
    }
}
