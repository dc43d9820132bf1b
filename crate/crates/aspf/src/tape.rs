//! Computation tape for reverse-mode automatic differentiation.
//!
//! Ops execute eagerly and append a node holding the produced tensor plus a
//! record of how it was produced. `backward` replays the records once, in
//! reverse, accumulating gradients by summation into every tracked node.

use crate::error::{Error, Result};
use crate::ops::{backward_step, OpRecord};
use crate::tensor::{Elem, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) struct Node<T: Elem> {
    pub tensor: Tensor<T>,
    pub op: OpRecord<T>,
}

/// Ordered record of executed ops. One tape per forward pass; consumed by
/// the backward pass.
pub struct Tape<T: Elem> {
    pub(crate) nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Elem> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Elem> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    /// Insert an input or parameter tensor as a graph leaf.
    pub fn leaf(&mut self, mut tensor: Tensor<T>, requires_grad: bool) -> Var {
        tensor.set_requires_grad(requires_grad);
        self.push(tensor, OpRecord::Leaf)
    }

    pub(crate) fn push(&mut self, tensor: Tensor<T>, op: OpRecord<T>) -> Var {
        self.nodes.push(Node { tensor, op });
        Var(self.nodes.len() - 1)
    }

    /// Append an op result, marking it tracked iff any input is tracked.
    pub(crate) fn push_result(
        &mut self,
        mut tensor: Tensor<T>,
        op: OpRecord<T>,
        inputs: &[Var],
        context: &str,
    ) -> Result<Var> {
        if !tensor.all_finite() {
            return Err(Error::NonFinite {
                context: context.to_string(),
            });
        }
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tensor.requires_grad());
        tensor.set_requires_grad(tracked);
        Ok(self.push(tensor, op))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].tensor
    }

    /// Gradient of a node, available after `backward` for tracked nodes.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].tensor.grad()
    }

    /// Move a node's gradient out as a tensor of the node's shape.
    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        let shape = self.nodes[v.0].tensor.shape().to_vec();
        self.nodes[v.0]
            .tensor
            .take_grad()
            .map(|g| Tensor::new(&shape, g).expect("grad buffer matches node shape"))
    }

    /// Batch statistics a normalization op computed in train mode,
    /// `(mean, variance)` per channel. `None` for other nodes.
    pub fn norm_batch_stats(&self, v: Var) -> Option<(Vec<T>, Vec<T>)> {
        match &self.nodes[v.0].op {
            OpRecord::BatchNorm {
                train: true,
                mean,
                inv_std,
                eps,
                ..
            } => {
                let var: Vec<T> = inv_std
                    .iter()
                    .map(|&s| {
                        // inv_std = 1/sqrt(var + eps), invert it back out
                        let s = s.to_f64();
                        T::from_f64(1.0 / (s * s) - eps)
                    })
                    .collect();
                Some((mean.clone(), var))
            }
            _ => None,
        }
    }

    /// Reverse pass from a scalar loss. Gradients of tracked parameters sum
    /// across all paths; the tape is consumed and refuses a second pass.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let loss_tensor = &self.nodes[loss.0].tensor;
        if !loss_tensor.is_scalar() {
            return Err(Error::ScalarLossRequired {
                shape: loss_tensor.shape().to_vec(),
            });
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::ONE]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tensor.requires_grad() {
                continue;
            }
            let Some(gout) = grads[i].take() else {
                continue;
            };
            backward_step(&self.nodes, i, &gout, &mut grads);
            grads[i] = Some(gout);
        }

        for (node, grad) in self.nodes.iter_mut().zip(grads) {
            if let Some(g) = grad {
                *node.tensor.grad_mut_or_zeroed() = g;
            }
        }
        Ok(())
    }
}

/// Allocate-or-fetch the gradient buffer for node `v` when it is tracked.
pub(crate) fn grad_buf_mut<'a, T: Elem>(
    nodes: &[Node<T>],
    grads: &'a mut [Option<Vec<T>>],
    v: Var,
) -> Option<&'a mut Vec<T>> {
    if !nodes[v.0].tensor.requires_grad() {
        return None;
    }
    let numel = nodes[v.0].tensor.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![T::ZERO; numel]))
}
