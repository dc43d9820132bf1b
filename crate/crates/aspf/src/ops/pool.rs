//! Global average pooling, the backbone-to-head junction.

use crate::error::{Error, Result};
use crate::tape::{grad_buf_mut, Node, Tape, Var};
use crate::tensor::{idx4, Elem, Tensor};

impl<T: Elem> Tape<T> {
    /// Spatial mean per sample and channel: [N,H,W,C] -> [N,C].
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        if x.shape().len() != 4 {
            return Err(Error::Shape {
                op: "global_avg_pool",
                detail: format!("need rank 4, got {:?}", x.shape()),
            });
        }
        let xs = x.shape().to_vec();
        let (n, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
        let inv_hw = T::from_f64(1.0 / (h * w) as f64);
        let mut out = vec![T::ZERO; n * c];
        for ni in 0..n {
            for ci in 0..c {
                let mut acc = T::ZERO;
                for y in 0..h {
                    for xp in 0..w {
                        acc = acc.add(x.data()[idx4(ni, y, xp, ci, &xs)]);
                    }
                }
                out[ni * c + ci] = acc.mul(inv_hw);
            }
        }
        let tensor = Tensor::new(&[n, c], out)?;
        self.push_result(
            tensor,
            super::OpRecord::GlobalAvgPool { input },
            &[input],
            "global_avg_pool",
        )
    }
}

pub(super) fn global_avg_pool_backward<T: Elem>(
    nodes: &[Node<T>],
    _out_idx: usize,
    gout: &[T],
    grads: &mut [Option<Vec<T>>],
    input: Var,
) {
    let xs = nodes[input.0].tensor.shape().to_vec();
    let (n, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
    let inv_hw = T::from_f64(1.0 / (h * w) as f64);
    if let Some(gx) = grad_buf_mut(nodes, grads, input) {
        for ni in 0..n {
            for y in 0..h {
                for xp in 0..w {
                    for ci in 0..c {
                        let i = idx4(ni, y, xp, ci, &xs);
                        gx[i] = gx[i].add(gout[ni * c + ci].mul(inv_hw));
                    }
                }
            }
        }
    }
}
