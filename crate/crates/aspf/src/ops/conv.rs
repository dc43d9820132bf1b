//! Standard and depthwise 2-D convolution over NHWC tensors.
//!
//! Summation order is part of the contract: the accumulator starts from the
//! bias (when present) and adds kernel taps in (kh, kw, cin) nesting order.
//! Padding taps are skipped, not added as zeros, so results are bit-exact
//! against a nested-loop oracle using the same order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{grad_buf_mut, Node, Tape, Var};
use crate::tensor::{idx4, Elem, Tensor};

/// Spatial padding policy. `Same` pads so the output size is ceil(in/stride),
/// with any odd padding pixel going to the bottom/right edge.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    Same,
}

/// Output size plus (top, left) pad for one spatial dimension.
fn resolve_dim(in_dim: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if in_dim < k {
                return Err(Error::Shape {
                    op: "conv2d",
                    detail: format!("kernel extent {k} exceeds input extent {in_dim}"),
                });
            }
            Ok(((in_dim - k) / stride + 1, 0))
        }
        Padding::Same => {
            let out = in_dim.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(in_dim);
            Ok((out, total / 2))
        }
    }
}

fn check_stride(stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::InvalidArg {
            op: "conv2d",
            detail: "stride must be positive".into(),
        });
    }
    Ok(())
}

impl<T: Elem> Tape<T> {
    /// 2-D convolution: input [N,H,W,Cin] * kernels [kh,kw,Cin,Cout] -> [N,H',W',Cout].
    pub fn conv2d(
        &mut self,
        input: Var,
        kernels: Var,
        bias: Option<Var>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        check_stride(stride)?;
        let x = self.value(input);
        let k = self.value(kernels);
        if x.shape().len() != 4 || k.shape().len() != 4 {
            return Err(Error::Shape {
                op: "conv2d",
                detail: format!(
                    "need input rank 4 and kernels rank 4, got {:?} and {:?}",
                    x.shape(),
                    k.shape()
                ),
            });
        }
        let (n, h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (kh, kw, kcin, cout) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
        if kcin != cin {
            return Err(Error::Shape {
                op: "conv2d",
                detail: format!("kernels expect {kcin} input channels, input has {cin}"),
            });
        }
        if let Some(b) = bias {
            let bt = self.value(b);
            if bt.shape() != [cout] {
                return Err(Error::Shape {
                    op: "conv2d",
                    detail: format!("bias shape {:?}, expected [{cout}]", bt.shape()),
                });
            }
        }
        let (oh, pad_t) = resolve_dim(h, kh, stride, padding)?;
        let (ow, pad_l) = resolve_dim(w, kw, stride, padding)?;

        let x = self.value(input);
        let k = self.value(kernels);
        let bias_data = bias.map(|b| self.value(b).data().to_vec());
        let xs = x.shape().to_vec();
        let mut out = vec![T::ZERO; n * oh * ow * cout];
        let out_shape = [n, oh, ow, cout];
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for co in 0..cout {
                        let mut acc = bias_data.as_ref().map_or(T::ZERO, |b| b[co]);
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad_t as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad_l as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                for ci in 0..cin {
                                    acc = acc.add(
                                        x.data()[idx4(ni, iy as usize, ix as usize, ci, &xs)]
                                            .mul(k.data()[((ky * kw + kx) * cin + ci) * cout + co]),
                                    );
                                }
                            }
                        }
                        out[idx4(ni, oy, ox, co, &out_shape)] = acc;
                    }
                }
            }
        }
        let tensor = Tensor::new(&out_shape, out)?;
        let mut inputs = vec![input, kernels];
        if let Some(b) = bias {
            inputs.push(b);
        }
        self.push_result(
            tensor,
            super::OpRecord::Conv2d {
                input,
                kernels,
                bias,
                stride,
                pad: (pad_t, pad_l),
            },
            &inputs,
            "conv2d",
        )
    }

    /// Depthwise convolution: input [N,H,W,C] * kernels [kh,kw,C] -> [N,H',W',C].
    /// Output channel c depends only on input channel c.
    pub fn depthwise_conv2d(
        &mut self,
        input: Var,
        kernels: Var,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        check_stride(stride)?;
        let x = self.value(input);
        let k = self.value(kernels);
        if x.shape().len() != 4 || k.shape().len() != 3 {
            return Err(Error::Shape {
                op: "depthwise_conv2d",
                detail: format!(
                    "need input rank 4 and kernels rank 3, got {:?} and {:?}",
                    x.shape(),
                    k.shape()
                ),
            });
        }
        let (n, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (kh, kw, kc) = (k.shape()[0], k.shape()[1], k.shape()[2]);
        if kc != c {
            return Err(Error::Shape {
                op: "depthwise_conv2d",
                detail: format!("kernels cover {kc} channels, input has {c}"),
            });
        }
        let (oh, pad_t) = resolve_dim(h, kh, stride, padding)?;
        let (ow, pad_l) = resolve_dim(w, kw, stride, padding)?;

        let xs = x.shape().to_vec();
        let mut out = vec![T::ZERO; n * oh * ow * c];
        let out_shape = [n, oh, ow, c];
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ci in 0..c {
                        let mut acc = T::ZERO;
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad_t as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad_l as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc = acc.add(
                                    x.data()[idx4(ni, iy as usize, ix as usize, ci, &xs)]
                                        .mul(k.data()[(ky * kw + kx) * c + ci]),
                                );
                            }
                        }
                        out[idx4(ni, oy, ox, ci, &out_shape)] = acc;
                    }
                }
            }
        }
        let tensor = Tensor::new(&out_shape, out)?;
        self.push_result(
            tensor,
            super::OpRecord::DepthwiseConv2d {
                input,
                kernels,
                stride,
                pad: (pad_t, pad_l),
            },
            &[input, kernels],
            "depthwise_conv2d",
        )
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn conv2d_backward<T: Elem>(
    nodes: &[Node<T>],
    out_idx: usize,
    gout: &[T],
    grads: &mut [Option<Vec<T>>],
    input: Var,
    kernels: Var,
    bias: Option<Var>,
    stride: usize,
    pad: (usize, usize),
) {
    let xs = nodes[input.0].tensor.shape().to_vec();
    let ks = nodes[kernels.0].tensor.shape().to_vec();
    let os = nodes[out_idx].tensor.shape().to_vec();
    let (n, h, w, cin) = (xs[0], xs[1], xs[2], xs[3]);
    let (kh, kw, cout) = (ks[0], ks[1], ks[3]);
    let (oh, ow) = (os[1], os[2]);
    let (pad_t, pad_l) = pad;

    if let Some(gx) = grad_buf_mut(nodes, grads, input) {
        let k = nodes[kernels.0].tensor.data();
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for co in 0..cout {
                        let go = gout[idx4(ni, oy, ox, co, &os)];
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad_t as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad_l as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                for ci in 0..cin {
                                    let gi = idx4(ni, iy as usize, ix as usize, ci, &xs);
                                    gx[gi] = gx[gi]
                                        .add(go.mul(k[((ky * kw + kx) * cin + ci) * cout + co]));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(gk) = grad_buf_mut(nodes, grads, kernels) {
        let x = nodes[input.0].tensor.data();
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for co in 0..cout {
                        let go = gout[idx4(ni, oy, ox, co, &os)];
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad_t as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad_l as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                for ci in 0..cin {
                                    let ki = ((ky * kw + kx) * cin + ci) * cout + co;
                                    gk[ki] = gk[ki]
                                        .add(go.mul(x[idx4(ni, iy as usize, ix as usize, ci, &xs)]));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(b) = bias {
        if let Some(gb) = grad_buf_mut(nodes, grads, b) {
            for ni in 0..n {
                for oy in 0..oh {
                    for ox in 0..ow {
                        for co in 0..cout {
                            gb[co] = gb[co].add(gout[idx4(ni, oy, ox, co, &os)]);
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn depthwise_backward<T: Elem>(
    nodes: &[Node<T>],
    out_idx: usize,
    gout: &[T],
    grads: &mut [Option<Vec<T>>],
    input: Var,
    kernels: Var,
    stride: usize,
    pad: (usize, usize),
) {
    let xs = nodes[input.0].tensor.shape().to_vec();
    let ks = nodes[kernels.0].tensor.shape().to_vec();
    let os = nodes[out_idx].tensor.shape().to_vec();
    let (n, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
    let (kh, kw) = (ks[0], ks[1]);
    let (oh, ow) = (os[1], os[2]);
    let (pad_t, pad_l) = pad;

    if let Some(gx) = grad_buf_mut(nodes, grads, input) {
        let k = nodes[kernels.0].tensor.data();
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ci in 0..c {
                        let go = gout[idx4(ni, oy, ox, ci, &os)];
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad_t as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad_l as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let gi = idx4(ni, iy as usize, ix as usize, ci, &xs);
                                gx[gi] = gx[gi].add(go.mul(k[(ky * kw + kx) * c + ci]));
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(gk) = grad_buf_mut(nodes, grads, kernels) {
        let x = nodes[input.0].tensor.data();
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ci in 0..c {
                        let go = gout[idx4(ni, oy, ox, ci, &os)];
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad_t as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad_l as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let ki = (ky * kw + kx) * c + ci;
                                gk[ki] = gk[ki]
                                    .add(go.mul(x[idx4(ni, iy as usize, ix as usize, ci, &xs)]));
                            }
                        }
                    }
                }
            }
        }
    }
}
