//! Pointwise activations plus row softmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{grad_buf_mut, Node, Tape, Var};
use crate::tensor::{Elem, Tensor};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Swish,
    Relu6,
    Tanh,
    Sigmoid,
    /// Along the last axis only.
    Softmax,
    /// Identity pass-through, used by linear layer hooks.
    Linear,
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid<T: Elem>(x: T) -> T {
    if x.to_f64() >= 0.0 {
        T::ONE.div(T::ONE.add(x.neg().exp()))
    } else {
        let e = x.exp();
        e.div(T::ONE.add(e))
    }
}

impl<T: Elem> Tape<T> {
    pub fn apply_activation(&mut self, kind: Activation, input: Var) -> Result<Var> {
        let x = self.value(input);
        let shape = x.shape().to_vec();
        let out = match kind {
            Activation::Swish => x.data().iter().map(|&v| v.mul(sigmoid(v))).collect(),
            Activation::Relu6 => {
                let six = T::from_f64(6.0);
                x.data()
                    .iter()
                    .map(|&v| T::min_of(T::max_of(v, T::ZERO), six))
                    .collect()
            }
            Activation::Tanh => x.data().iter().map(|&v| v.tanh()).collect(),
            Activation::Sigmoid => x.data().iter().map(|&v| sigmoid(v)).collect(),
            Activation::Softmax => {
                let cols = *shape.last().ok_or(Error::Shape {
                    op: "softmax",
                    detail: "rank 0 input".into(),
                })?;
                if cols == 0 {
                    return Err(Error::Shape {
                        op: "softmax",
                        detail: "last axis has extent 0".into(),
                    });
                }
                let mut out = Vec::with_capacity(x.numel());
                for row in x.data().chunks(cols) {
                    // max subtraction keeps the exponentials bounded
                    let m = row.iter().copied().fold(row[0], T::max_of);
                    let exps: Vec<T> = row.iter().map(|&v| v.sub(m).exp()).collect();
                    let mut denom = T::ZERO;
                    for &e in &exps {
                        denom = denom.add(e);
                    }
                    out.extend(exps.iter().map(|&e| e.div(denom)));
                }
                out
            }
            Activation::Linear => x.data().to_vec(),
        };
        let tensor = Tensor::new(&shape, out)?;
        self.push_result(
            tensor,
            super::OpRecord::Activation { input, kind },
            &[input],
            "activation",
        )
    }
}

pub(super) fn activation_backward<T: Elem>(
    nodes: &[Node<T>],
    out_idx: usize,
    gout: &[T],
    grads: &mut [Option<Vec<T>>],
    input: Var,
    kind: Activation,
) {
    let y = nodes[out_idx].tensor.data();
    let x = nodes[input.0].tensor.data();
    let Some(g) = grad_buf_mut(nodes, grads, input) else {
        return;
    };
    match kind {
        Activation::Swish => {
            // d/dx x·σ(x) = σ(x)·(1 + x·(1−σ(x)))
            for i in 0..x.len() {
                let s = sigmoid(x[i]);
                let d = s.mul(T::ONE.add(x[i].mul(T::ONE.sub(s))));
                g[i] = g[i].add(gout[i].mul(d));
            }
        }
        Activation::Relu6 => {
            for i in 0..x.len() {
                let v = x[i].to_f64();
                if v > 0.0 && v < 6.0 {
                    g[i] = g[i].add(gout[i]);
                }
            }
        }
        Activation::Tanh => {
            for i in 0..y.len() {
                g[i] = g[i].add(gout[i].mul(T::ONE.sub(y[i].mul(y[i]))));
            }
        }
        Activation::Sigmoid => {
            for i in 0..y.len() {
                g[i] = g[i].add(gout[i].mul(y[i].mul(T::ONE.sub(y[i]))));
            }
        }
        Activation::Softmax => {
            let cols = *nodes[out_idx].tensor.shape().last().unwrap();
            for r in 0..y.len() / cols {
                let row = &y[r * cols..(r + 1) * cols];
                let grow = &gout[r * cols..(r + 1) * cols];
                let mut dot = T::ZERO;
                for j in 0..cols {
                    dot = dot.add(grow[j].mul(row[j]));
                }
                for j in 0..cols {
                    g[r * cols + j] = g[r * cols + j].add(row[j].mul(grow[j].sub(dot)));
                }
            }
        }
        Activation::Linear => {
            for i in 0..gout.len() {
                g[i] = g[i].add(gout[i]);
            }
        }
    }
}
