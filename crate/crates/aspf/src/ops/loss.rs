//! Binary cross entropy over probabilities.

use crate::error::{Error, Result};
use crate::tape::{grad_buf_mut, Node, Tape, Var};
use crate::tensor::{Elem, Tensor};

/// Predictions are clamped into [CLAMP_LO, 1 − CLAMP_LO] before the logs so
/// saturated outputs produce a finite loss. The gradient treats the clamp as
/// a hard stop: elements outside the band contribute zero gradient.
pub const CLAMP_LO: f64 = 1e-7;

fn clamp<T: Elem>(p: T) -> T {
    let lo = T::from_f64(CLAMP_LO);
    let hi = T::from_f64(1.0 - CLAMP_LO);
    T::min_of(T::max_of(p, lo), hi)
}

impl<T: Elem> Tape<T> {
    /// Weighted mean of −[y·ln ŷ + (1−y)·ln(1−ŷ)] over all elements, as a
    /// [1] tensor. `weights` defaults to all ones; the mean is
    /// Σ wᵢ·ℓᵢ / Σ wᵢ.
    pub fn bce_loss(&mut self, pred: Var, target: &[T], weights: Option<&[T]>) -> Result<Var> {
        let p = self.value(pred);
        if p.numel() != target.len() {
            return Err(Error::Shape {
                op: "bce_loss",
                detail: format!(
                    "prediction has {} elements, target has {}",
                    p.numel(),
                    target.len()
                ),
            });
        }
        if let Some(w) = weights {
            if w.len() != target.len() {
                return Err(Error::Shape {
                    op: "bce_loss",
                    detail: format!(
                        "weights have {} elements, target has {}",
                        w.len(),
                        target.len()
                    ),
                });
            }
        }
        if target.is_empty() {
            return Err(Error::EmptyInput {
                what: "bce_loss batch".into(),
            });
        }
        let mut num = T::ZERO;
        let mut weight_sum = T::ZERO;
        for i in 0..target.len() {
            let w = weights.map_or(T::ONE, |ws| ws[i]);
            let ph = clamp(p.data()[i]);
            let y = target[i];
            let l = y
                .mul(ph.ln())
                .add(T::ONE.sub(y).mul(T::ONE.sub(ph).ln()))
                .neg();
            num = num.add(w.mul(l));
            weight_sum = weight_sum.add(w);
        }
        if weight_sum.to_f64() == 0.0 {
            return Err(Error::InvalidArg {
                op: "bce_loss",
                detail: "weights sum to zero".into(),
            });
        }
        let tensor = Tensor::new(&[1], vec![num.div(weight_sum)])?;
        self.push_result(
            tensor,
            super::OpRecord::Bce {
                pred,
                target: target.to_vec(),
                weights: weights.map(|w| w.to_vec()),
                weight_sum,
            },
            &[pred],
            "bce_loss",
        )
    }
}

pub(super) fn bce_backward<T: Elem>(
    nodes: &[Node<T>],
    gout: &[T],
    grads: &mut [Option<Vec<T>>],
    pred: Var,
    target: &[T],
    weights: Option<&[T]>,
    weight_sum: T,
) {
    let p = nodes[pred.0].tensor.data();
    if let Some(gp) = grad_buf_mut(nodes, grads, pred) {
        for i in 0..target.len() {
            let v = p[i].to_f64();
            // clamped elements sit on a flat section of the loss
            if !(CLAMP_LO..=1.0 - CLAMP_LO).contains(&v) {
                continue;
            }
            let w = weights.map_or(T::ONE, |ws| ws[i]);
            let y = target[i];
            // dℓ/dŷ = (ŷ − y) / (ŷ(1−ŷ))
            let d = p[i]
                .sub(y)
                .div(p[i].mul(T::ONE.sub(p[i])))
                .mul(w)
                .div(weight_sum);
            gp[i] = gp[i].add(gout[0].mul(d));
        }
    }
}
