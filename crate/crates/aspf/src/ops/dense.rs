//! Fully connected layer over [N, In] activations.
//!
//! Accumulation starts from the bias and walks input features in order, so a
//! nested-loop oracle with the same order matches bit for bit.

use crate::error::{Error, Result};
use crate::tape::{grad_buf_mut, Node, Tape, Var};
use crate::tensor::{Elem, Tensor};

impl<T: Elem> Tape<T> {
    /// input [N, In] * weights [In, Out] + bias [Out] -> [N, Out].
    pub fn dense(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        let x = self.value(input);
        let w = self.value(weights);
        let b = self.value(bias);
        if x.shape().len() != 2 || w.shape().len() != 2 || b.shape().len() != 1 {
            return Err(Error::Shape {
                op: "dense",
                detail: format!(
                    "need ranks 2/2/1, got {:?}/{:?}/{:?}",
                    x.shape(),
                    w.shape(),
                    b.shape()
                ),
            });
        }
        let (n, fin) = (x.shape()[0], x.shape()[1]);
        let (win, fout) = (w.shape()[0], w.shape()[1]);
        if fin != win || b.shape()[0] != fout {
            return Err(Error::Shape {
                op: "dense",
                detail: format!(
                    "input features {fin} vs weight rows {win}, bias {} vs weight cols {fout}",
                    b.shape()[0]
                ),
            });
        }
        let mut out = vec![T::ZERO; n * fout];
        for ni in 0..n {
            for fo in 0..fout {
                let mut acc = b.data()[fo];
                for fi in 0..fin {
                    acc = acc.add(x.data()[ni * fin + fi].mul(w.data()[fi * fout + fo]));
                }
                out[ni * fout + fo] = acc;
            }
        }
        let tensor = Tensor::new(&[n, fout], out)?;
        self.push_result(
            tensor,
            super::OpRecord::Dense {
                input,
                weights,
                bias,
            },
            &[input, weights, bias],
            "dense",
        )
    }
}

pub(super) fn dense_backward<T: Elem>(
    nodes: &[Node<T>],
    gout: &[T],
    grads: &mut [Option<Vec<T>>],
    input: Var,
    weights: Var,
    bias: Var,
) {
    let xs = nodes[input.0].tensor.shape().to_vec();
    let ws = nodes[weights.0].tensor.shape().to_vec();
    let (n, fin) = (xs[0], xs[1]);
    let fout = ws[1];

    if let Some(gx) = grad_buf_mut(nodes, grads, input) {
        let w = nodes[weights.0].tensor.data();
        for ni in 0..n {
            for fi in 0..fin {
                let mut acc = T::ZERO;
                for fo in 0..fout {
                    acc = acc.add(gout[ni * fout + fo].mul(w[fi * fout + fo]));
                }
                gx[ni * fin + fi] = gx[ni * fin + fi].add(acc);
            }
        }
    }
    if let Some(gw) = grad_buf_mut(nodes, grads, weights) {
        let x = nodes[input.0].tensor.data();
        for fi in 0..fin {
            for fo in 0..fout {
                let mut acc = T::ZERO;
                for ni in 0..n {
                    acc = acc.add(x[ni * fin + fi].mul(gout[ni * fout + fo]));
                }
                gw[fi * fout + fo] = gw[fi * fout + fo].add(acc);
            }
        }
    }
    if let Some(gb) = grad_buf_mut(nodes, grads, bias) {
        for ni in 0..n {
            for fo in 0..fout {
                gb[fo] = gb[fo].add(gout[ni * fout + fo]);
            }
        }
    }
}
