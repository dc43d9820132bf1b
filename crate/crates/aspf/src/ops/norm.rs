//! Batch and group normalization over NHWC (rank 4) or [N, C] (rank 2)
//! activations. Batch norm reduces over everything but the channel axis and
//! carries running statistics for inference; group norm reduces per sample
//! over each group's channels and spatial positions and has no mode split.

use crate::error::{Error, Result};
use crate::tape::{grad_buf_mut, Node, Tape, Var};
use crate::tensor::{Elem, Tensor};

/// Whether an op runs with training semantics (batch statistics, dropped
/// connections) or inference semantics (running statistics, identity).
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Infer,
}

/// (batch, spatial, channels) view of a rank-2 or rank-4 tensor.
fn nsc(shape: &[usize], op: &'static str) -> Result<(usize, usize, usize)> {
    match shape.len() {
        2 => Ok((shape[0], 1, shape[1])),
        4 => Ok((shape[0], shape[1] * shape[2], shape[3])),
        _ => Err(Error::Shape {
            op,
            detail: format!("need rank 2 or 4, got {shape:?}"),
        }),
    }
}

fn check_affine<T: Elem>(
    tape: &Tape<T>,
    gamma: Var,
    beta: Var,
    c: usize,
    op: &'static str,
) -> Result<()> {
    for (name, v) in [("gamma", gamma), ("beta", beta)] {
        let s = tape.value(v).shape();
        if s != [c] {
            return Err(Error::Shape {
                op,
                detail: format!("{name} shape {s:?}, expected [{c}]"),
            });
        }
    }
    Ok(())
}

fn check_eps(eps: f64, op: &'static str) -> Result<()> {
    if eps <= 0.0 {
        return Err(Error::InvalidArg {
            op,
            detail: format!("eps must be positive, got {eps}"),
        });
    }
    Ok(())
}

impl<T: Elem> Tape<T> {
    /// Per-channel normalization over the batch. In `Train` mode the batch
    /// statistics are used (and retrievable via [`Tape::norm_batch_stats`]
    /// for running-average updates); in `Infer` mode `running_mean` and
    /// `running_var` are used and treated as constants.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        mode: NormMode,
        running_mean: &[T],
        running_var: &[T],
    ) -> Result<Var> {
        check_eps(eps, "batch_norm")?;
        let shape = self.value(input).shape().to_vec();
        let (n, spatial, c) = nsc(&shape, "batch_norm")?;
        check_affine(self, gamma, beta, c, "batch_norm")?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::Shape {
                op: "batch_norm",
                detail: format!(
                    "running stats lengths {}/{}, expected {c}",
                    running_mean.len(),
                    running_var.len()
                ),
            });
        }

        let train = mode == NormMode::Train;
        let rows = n * spatial;
        let x = self.value(input).data();
        let (mean, var) = if train {
            let mut mean = vec![T::ZERO; c];
            let mut var = vec![T::ZERO; c];
            for r in 0..rows {
                for ci in 0..c {
                    mean[ci] = mean[ci].add(x[r * c + ci]);
                }
            }
            let inv_m = T::from_f64(1.0 / rows as f64);
            for m in mean.iter_mut() {
                *m = m.mul(inv_m);
            }
            for r in 0..rows {
                for ci in 0..c {
                    let d = x[r * c + ci].sub(mean[ci]);
                    var[ci] = var[ci].add(d.mul(d));
                }
            }
            for v in var.iter_mut() {
                *v = v.mul(inv_m);
            }
            (mean, var)
        } else {
            (running_mean.to_vec(), running_var.to_vec())
        };
        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::ONE.div(v.add(T::from_f64(eps)).sqrt()))
            .collect();

        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        let x = self.value(input).data();
        let mut out = vec![T::ZERO; x.len()];
        for r in 0..rows {
            for ci in 0..c {
                let xhat = x[r * c + ci].sub(mean[ci]).mul(inv_std[ci]);
                out[r * c + ci] = g[ci].mul(xhat).add(b[ci]);
            }
        }
        let tensor = Tensor::new(&shape, out)?;
        self.push_result(
            tensor,
            super::OpRecord::BatchNorm {
                input,
                gamma,
                beta,
                eps,
                mean,
                inv_std,
                train,
            },
            &[input, gamma, beta],
            "batch_norm",
        )
    }

    /// Group normalization: per sample, channels split into `groups` equal
    /// slices; mean/variance taken over each slice and all spatial positions.
    /// Mode-independent by construction.
    pub fn group_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        eps: f64,
    ) -> Result<Var> {
        check_eps(eps, "group_norm")?;
        let shape = self.value(input).shape().to_vec();
        let (n, spatial, c) = nsc(&shape, "group_norm")?;
        check_affine(self, gamma, beta, c, "group_norm")?;
        if groups == 0 || c % groups != 0 {
            return Err(Error::InvalidArg {
                op: "group_norm",
                detail: format!("channels {c} not divisible into {groups} groups"),
            });
        }
        let gsize = c / groups;
        let m = spatial * gsize;
        let inv_m = T::from_f64(1.0 / m as f64);

        let x = self.value(input).data();
        let mut mean = vec![T::ZERO; n * groups];
        let mut inv_std = vec![T::ZERO; n * groups];
        for ni in 0..n {
            for gi in 0..groups {
                let mut s = T::ZERO;
                for p in 0..spatial {
                    for k in 0..gsize {
                        s = s.add(x[(ni * spatial + p) * c + gi * gsize + k]);
                    }
                }
                let mu = s.mul(inv_m);
                let mut v = T::ZERO;
                for p in 0..spatial {
                    for k in 0..gsize {
                        let d = x[(ni * spatial + p) * c + gi * gsize + k].sub(mu);
                        v = v.add(d.mul(d));
                    }
                }
                mean[ni * groups + gi] = mu;
                inv_std[ni * groups + gi] =
                    T::ONE.div(v.mul(inv_m).add(T::from_f64(eps)).sqrt());
            }
        }

        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        let x = self.value(input).data();
        let mut out = vec![T::ZERO; x.len()];
        for ni in 0..n {
            for p in 0..spatial {
                for ci in 0..c {
                    let gi = ci / gsize;
                    let idx = (ni * spatial + p) * c + ci;
                    let xhat = x[idx]
                        .sub(mean[ni * groups + gi])
                        .mul(inv_std[ni * groups + gi]);
                    out[idx] = g[ci].mul(xhat).add(b[ci]);
                }
            }
        }
        let tensor = Tensor::new(&shape, out)?;
        self.push_result(
            tensor,
            super::OpRecord::GroupNorm {
                input,
                gamma,
                beta,
                groups,
                mean,
                inv_std,
            },
            &[input, gamma, beta],
            "group_norm",
        )
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn batch_norm_backward<T: Elem>(
    nodes: &[Node<T>],
    out_idx: usize,
    gout: &[T],
    grads: &mut [Option<Vec<T>>],
    input: Var,
    gamma: Var,
    beta: Var,
    mean: &[T],
    inv_std: &[T],
    train: bool,
) {
    let shape = nodes[out_idx].tensor.shape().to_vec();
    let (n, spatial, c) = nsc(&shape, "batch_norm").expect("validated at forward");
    let rows = n * spatial;
    let x = nodes[input.0].tensor.data();
    let g = nodes[gamma.0].tensor.data();

    // per-channel sums of gout and gout·x̂, shared by all three inputs
    let mut sum_g = vec![T::ZERO; c];
    let mut sum_gx = vec![T::ZERO; c];
    for r in 0..rows {
        for ci in 0..c {
            let go = gout[r * c + ci];
            let xhat = x[r * c + ci].sub(mean[ci]).mul(inv_std[ci]);
            sum_g[ci] = sum_g[ci].add(go);
            sum_gx[ci] = sum_gx[ci].add(go.mul(xhat));
        }
    }

    if let Some(gx) = grad_buf_mut(nodes, grads, input) {
        if train {
            let inv_m = T::from_f64(1.0 / rows as f64);
            for r in 0..rows {
                for ci in 0..c {
                    let i = r * c + ci;
                    let xhat = x[i].sub(mean[ci]).mul(inv_std[ci]);
                    let d = gout[i]
                        .sub(sum_g[ci].mul(inv_m))
                        .sub(xhat.mul(sum_gx[ci].mul(inv_m)));
                    gx[i] = gx[i].add(g[ci].mul(inv_std[ci]).mul(d));
                }
            }
        } else {
            // running stats are constants, so the map is affine per channel
            for r in 0..rows {
                for ci in 0..c {
                    let i = r * c + ci;
                    gx[i] = gx[i].add(gout[i].mul(g[ci]).mul(inv_std[ci]));
                }
            }
        }
    }
    if let Some(gg) = grad_buf_mut(nodes, grads, gamma) {
        for ci in 0..c {
            gg[ci] = gg[ci].add(sum_gx[ci]);
        }
    }
    if let Some(gb) = grad_buf_mut(nodes, grads, beta) {
        for ci in 0..c {
            gb[ci] = gb[ci].add(sum_g[ci]);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn group_norm_backward<T: Elem>(
    nodes: &[Node<T>],
    out_idx: usize,
    gout: &[T],
    grads: &mut [Option<Vec<T>>],
    input: Var,
    gamma: Var,
    beta: Var,
    groups: usize,
    mean: &[T],
    inv_std: &[T],
) {
    let shape = nodes[out_idx].tensor.shape().to_vec();
    let (n, spatial, c) = nsc(&shape, "group_norm").expect("validated at forward");
    let gsize = c / groups;
    let m = spatial * gsize;
    let inv_m = T::from_f64(1.0 / m as f64);
    let x = nodes[input.0].tensor.data();
    let g = nodes[gamma.0].tensor.data();

    if let Some(gx) = grad_buf_mut(nodes, grads, input) {
        for ni in 0..n {
            for gi in 0..groups {
                let mu = mean[ni * groups + gi];
                let s = inv_std[ni * groups + gi];
                // u = gout·γ is the gradient w.r.t. x̂ inside this region
                let mut sum_u = T::ZERO;
                let mut sum_ux = T::ZERO;
                for p in 0..spatial {
                    for k in 0..gsize {
                        let ci = gi * gsize + k;
                        let i = (ni * spatial + p) * c + ci;
                        let u = gout[i].mul(g[ci]);
                        sum_u = sum_u.add(u);
                        sum_ux = sum_ux.add(u.mul(x[i].sub(mu).mul(s)));
                    }
                }
                for p in 0..spatial {
                    for k in 0..gsize {
                        let ci = gi * gsize + k;
                        let i = (ni * spatial + p) * c + ci;
                        let u = gout[i].mul(g[ci]);
                        let xhat = x[i].sub(mu).mul(s);
                        let d = u.sub(sum_u.mul(inv_m)).sub(xhat.mul(sum_ux.mul(inv_m)));
                        gx[i] = gx[i].add(s.mul(d));
                    }
                }
            }
        }
    }
    if let Some(gg) = grad_buf_mut(nodes, grads, gamma) {
        for ni in 0..n {
            for p in 0..spatial {
                for (ci, g) in gg.iter_mut().enumerate() {
                    let gi = ci / gsize;
                    let i = (ni * spatial + p) * c + ci;
                    let xhat = x[i]
                        .sub(mean[ni * groups + gi])
                        .mul(inv_std[ni * groups + gi]);
                    *g = g.add(gout[i].mul(xhat));
                }
            }
        }
    }
    if let Some(gb) = grad_buf_mut(nodes, grads, beta) {
        for ni in 0..n {
            for p in 0..spatial {
                for ci in 0..c {
                    gb[ci] = gb[ci].add(gout[(ni * spatial + p) * c + ci]);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_normalizes_to_zero() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[2, 2, 2, 3], 5.0), false);
        let g = tape.leaf(Tensor::full(&[3], 1.0), false);
        let b = tape.leaf(Tensor::full(&[3], 0.0), false);
        let y = tape
            .batch_norm(x, g, b, 1e-5, NormMode::Train, &[0.0; 3], &[1.0; 3])
            .unwrap();
        for &v in tape.value(y).data() {
            assert_eq!(v, 0.0);
        }
        let y2 = tape.group_norm(x, g, b, 3, 1e-5).unwrap();
        for &v in tape.value(y2).data() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn infer_mode_uses_running_stats() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(&[1, 2], vec![3.0, 3.0]).unwrap(), false);
        let g = tape.leaf(Tensor::full(&[2], 1.0), false);
        let b = tape.leaf(Tensor::full(&[2], 0.0), false);
        let y = tape
            .batch_norm(x, g, b, 1e-5, NormMode::Infer, &[1.0, 1.0], &[4.0, 4.0])
            .unwrap();
        // (3-1)/sqrt(4+1e-5) ~ 1
        for &v in tape.value(y).data() {
            assert!((v - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn group_count_must_divide_channels() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[1, 2, 2, 6], 1.0), false);
        let g = tape.leaf(Tensor::full(&[6], 1.0), false);
        let b = tape.leaf(Tensor::full(&[6], 0.0), false);
        assert!(matches!(
            tape.group_norm(x, g, b, 4, 1e-5),
            Err(Error::InvalidArg { .. })
        ));
    }

    #[test]
    fn eps_must_be_positive() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[1, 4], 1.0), false);
        let g = tape.leaf(Tensor::full(&[4], 1.0), false);
        let b = tape.leaf(Tensor::full(&[4], 0.0), false);
        assert!(matches!(
            tape.batch_norm(x, g, b, 0.0, NormMode::Train, &[0.0; 4], &[1.0; 4]),
            Err(Error::InvalidArg { .. })
        ));
        assert!(matches!(
            tape.group_norm(x, g, b, 2, -1.0),
            Err(Error::InvalidArg { .. })
        ));
    }

    #[test]
    fn train_stats_roundtrip_through_accessor() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(
            Tensor::new(&[4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            false,
        );
        let g = tape.leaf(Tensor::full(&[1], 1.0), false);
        let b = tape.leaf(Tensor::full(&[1], 0.0), false);
        let y = tape
            .batch_norm(x, g, b, 1e-5, NormMode::Train, &[0.0], &[1.0])
            .unwrap();
        let (mean, var) = tape.norm_batch_stats(y).unwrap();
        assert!((mean[0] - 2.5).abs() < 1e-12);
        assert!((var[0] - 1.25).abs() < 1e-9);
    }
}
