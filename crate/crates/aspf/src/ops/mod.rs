//! Forward operators and their reverse-mode derivatives.
//!
//! Each op validates shapes, computes its output eagerly, checks the result
//! for NaN/Inf, and appends an [`OpRecord`] to the tape. `backward_step`
//! dispatches one node's contribution to its inputs' gradients.

mod activation;
mod conv;
mod dense;
mod elementwise;
mod loss;
mod norm;
mod pool;

pub use activation::Activation;
pub use conv::Padding;
pub use norm::NormMode;

use crate::tape::{grad_buf_mut, Node, Var};
use crate::tensor::Elem;

/// How a tape node was produced, with everything backward needs saved.
pub(crate) enum OpRecord<T: Elem> {
    Leaf,
    Conv2d {
        input: Var,
        kernels: Var,
        bias: Option<Var>,
        stride: usize,
        pad: (usize, usize),
    },
    DepthwiseConv2d {
        input: Var,
        kernels: Var,
        stride: usize,
        pad: (usize, usize),
    },
    Dense {
        input: Var,
        weights: Var,
        bias: Var,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        mean: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    GroupNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        mean: Vec<T>,
        inv_std: Vec<T>,
    },
    DropConnect {
        input: Var,
        mask: Vec<T>,
    },
    GlobalAvgPool {
        input: Var,
    },
    Add {
        lhs: Var,
        rhs: Var,
    },
    Bce {
        pred: Var,
        target: Vec<T>,
        weights: Option<Vec<T>>,
        weight_sum: T,
    },
    SumAll {
        input: Var,
    },
    PickColumn {
        input: Var,
        col: usize,
    },
    PickScalar {
        input: Var,
        index: usize,
    },
}

/// Propagate `gout` (gradient at node `i`) into the gradients of its inputs.
pub(crate) fn backward_step<T: Elem>(
    nodes: &[Node<T>],
    i: usize,
    gout: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    match &nodes[i].op {
        OpRecord::Leaf => {}
        OpRecord::Conv2d {
            input,
            kernels,
            bias,
            stride,
            pad,
        } => {
            conv::conv2d_backward(nodes, i, gout, grads, *input, *kernels, *bias, *stride, *pad);
        }
        OpRecord::DepthwiseConv2d {
            input,
            kernels,
            stride,
            pad,
        } => {
            conv::depthwise_backward(nodes, i, gout, grads, *input, *kernels, *stride, *pad);
        }
        OpRecord::Dense {
            input,
            weights,
            bias,
        } => {
            dense::dense_backward(nodes, gout, grads, *input, *weights, *bias);
        }
        OpRecord::Activation { input, kind } => {
            activation::activation_backward(nodes, i, gout, grads, *input, *kind);
        }
        OpRecord::BatchNorm {
            input,
            gamma,
            beta,
            mean,
            inv_std,
            train,
            ..
        } => {
            norm::batch_norm_backward(
                nodes, i, gout, grads, *input, *gamma, *beta, mean, inv_std, *train,
            );
        }
        OpRecord::GroupNorm {
            input,
            gamma,
            beta,
            groups,
            mean,
            inv_std,
        } => {
            norm::group_norm_backward(
                nodes, i, gout, grads, *input, *gamma, *beta, *groups, mean, inv_std,
            );
        }
        OpRecord::DropConnect { input, mask } => {
            if let Some(g) = grad_buf_mut(nodes, grads, *input) {
                for (gi, (&go, &m)) in g.iter_mut().zip(gout.iter().zip(mask.iter())) {
                    *gi = gi.add(go.mul(m));
                }
            }
        }
        OpRecord::GlobalAvgPool { input } => {
            pool::global_avg_pool_backward(nodes, i, gout, grads, *input);
        }
        OpRecord::Add { lhs, rhs } => {
            for v in [*lhs, *rhs] {
                if let Some(g) = grad_buf_mut(nodes, grads, v) {
                    for (gi, &go) in g.iter_mut().zip(gout.iter()) {
                        *gi = gi.add(go);
                    }
                }
            }
        }
        OpRecord::Bce {
            pred,
            target,
            weights,
            weight_sum,
        } => {
            loss::bce_backward(nodes, gout, grads, *pred, target, weights.as_deref(), *weight_sum);
        }
        OpRecord::SumAll { input } => {
            if let Some(g) = grad_buf_mut(nodes, grads, *input) {
                for gi in g.iter_mut() {
                    *gi = gi.add(gout[0]);
                }
            }
        }
        OpRecord::PickColumn { input, col } => {
            let cols = nodes[input.0].tensor.shape()[1];
            if let Some(g) = grad_buf_mut(nodes, grads, *input) {
                for (row, &go) in gout.iter().enumerate() {
                    g[row * cols + col] = g[row * cols + col].add(go);
                }
            }
        }
        OpRecord::PickScalar { input, index } => {
            if let Some(g) = grad_buf_mut(nodes, grads, *input) {
                g[*index] = g[*index].add(gout[0]);
            }
        }
    }
}
