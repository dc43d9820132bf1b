//! Structural ops: elementwise add, dropconnect masking, reductions and
//! selections used to assemble scalar losses and per-class scores.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::NormMode;
use crate::tape::{Tape, Var};
use crate::tensor::{Elem, Tensor};

impl<T: Elem> Tape<T> {
    /// Elementwise sum of two same-shape tensors (residual connections).
    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let a = self.value(lhs);
        let b = self.value(rhs);
        if a.shape() != b.shape() {
            return Err(Error::Shape {
                op: "add",
                detail: format!("shapes {:?} and {:?} differ", a.shape(), b.shape()),
            });
        }
        let shape = a.shape().to_vec();
        let out: Vec<T> = a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(&x, &y)| x.add(y))
            .collect();
        let tensor = Tensor::new(&shape, out)?;
        self.push_result(tensor, super::OpRecord::Add { lhs, rhs }, &[lhs, rhs], "add")
    }

    /// DropConnect on a weight tensor. Train mode zeroes each element
    /// independently with probability `rate` and scales survivors by
    /// 1/(1−rate); infer mode is an identity (the input var is returned,
    /// no node is added). The mask consumes one draw from `rng` per
    /// element, in element order.
    pub fn dropconnect(
        &mut self,
        weights: Var,
        rate: f64,
        rng: &mut impl Rng,
        mode: NormMode,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArg {
                op: "dropconnect",
                detail: format!("rate must lie in [0,1), got {rate}"),
            });
        }
        if mode == NormMode::Infer {
            return Ok(weights);
        }
        let w = self.value(weights);
        let shape = w.shape().to_vec();
        let keep_scale = T::from_f64(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..w.numel())
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    T::ZERO
                } else {
                    keep_scale
                }
            })
            .collect();
        let out: Vec<T> = w
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(&x, &m)| x.mul(m))
            .collect();
        let tensor = Tensor::new(&shape, out)?;
        self.push_result(
            tensor,
            super::OpRecord::DropConnect {
                input: weights,
                mask,
            },
            &[weights],
            "dropconnect",
        )
    }

    /// Sum of every element, as a [1] tensor.
    pub fn sum_all(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let mut acc = T::ZERO;
        for &v in x.data() {
            acc = acc.add(v);
        }
        let tensor = Tensor::new(&[1], vec![acc])?;
        self.push_result(
            tensor,
            super::OpRecord::SumAll { input },
            &[input],
            "sum_all",
        )
    }

    /// Column `col` of a [N, C] tensor, as a [N] tensor.
    pub fn pick_column(&mut self, input: Var, col: usize) -> Result<Var> {
        let x = self.value(input);
        if x.shape().len() != 2 {
            return Err(Error::Shape {
                op: "pick_column",
                detail: format!("need rank 2, got {:?}", x.shape()),
            });
        }
        let (n, c) = (x.shape()[0], x.shape()[1]);
        if col >= c {
            return Err(Error::InvalidArg {
                op: "pick_column",
                detail: format!("column {col} out of range for {c} columns"),
            });
        }
        let out: Vec<T> = (0..n).map(|r| x.data()[r * c + col]).collect();
        let tensor = Tensor::new(&[n], out)?;
        self.push_result(
            tensor,
            super::OpRecord::PickColumn { input, col },
            &[input],
            "pick_column",
        )
    }

    /// Single element at flat `index`, as a [1] tensor.
    pub fn pick_scalar(&mut self, input: Var, index: usize) -> Result<Var> {
        let x = self.value(input);
        if index >= x.numel() {
            return Err(Error::InvalidArg {
                op: "pick_scalar",
                detail: format!("index {index} out of range for {} elements", x.numel()),
            });
        }
        let tensor = Tensor::new(&[1], vec![x.data()[index]])?;
        self.push_result(
            tensor,
            super::OpRecord::PickScalar { input, index },
            &[input],
            "pick_scalar",
        )
    }
}
