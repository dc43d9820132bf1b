//! Forward execution of the layer program on a tape.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::{Activation, NormMode, Padding};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::{LayerDef, Model, NormKind, NormRef};

/// Handles produced by one forward pass.
pub struct Forward {
    /// Input leaf.
    pub input: Var,
    /// Pre-classifier-activation values, [N,1] or [N,2].
    pub logits: Var,
    /// Post-activation model output.
    pub output: Var,
    /// One leaf per model parameter, in parameter order.
    pub param_vars: Vec<Var>,
    /// Post-activation feature map of every backbone block, named
    /// `backbone.{i}`, in network order.
    pub features: Vec<(String, Var)>,
    /// (running-stat index, batch-norm node) pairs for committing batch
    /// statistics after a training step.
    pub norm_updates: Vec<(usize, Var)>,
}

struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("inference never samples")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("inference never samples")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("inference never samples")
    }
    fn try_fill_bytes(&mut self, _: &mut [u8]) -> std::result::Result<(), rand::Error> {
        unreachable!("inference never samples")
    }
}

impl Model {
    /// Training-mode forward: parameters tracked, batch statistics used for
    /// batch norm, dropconnect sampled from `rng`.
    pub fn forward_train<R: Rng>(
        &self,
        tape: &mut Tape<f32>,
        batch: Tensor<f32>,
        rng: &mut R,
    ) -> Result<Forward> {
        self.forward_impl(tape, batch, NormMode::Train, true, false, rng)
    }

    /// Inference-mode forward: nothing tracked, running statistics used,
    /// dropconnect inactive.
    pub fn forward_infer(&self, tape: &mut Tape<f32>, batch: Tensor<f32>) -> Result<Forward> {
        self.forward_impl(tape, batch, NormMode::Infer, false, false, &mut NoRng)
    }

    /// Inference semantics with the input and parameters tracked, so scores
    /// can be differentiated for attention maps and saliency.
    pub fn forward_traced(&self, tape: &mut Tape<f32>, batch: Tensor<f32>) -> Result<Forward> {
        self.forward_impl(tape, batch, NormMode::Infer, true, true, &mut NoRng)
    }

    fn forward_impl<R: Rng>(
        &self,
        tape: &mut Tape<f32>,
        batch: Tensor<f32>,
        mode: NormMode,
        track_params: bool,
        track_input: bool,
        rng: &mut R,
    ) -> Result<Forward> {
        let (h, w, c) = self.spec.input_shape;
        let shape = batch.shape();
        if shape.len() != 4 || shape[1] != h || shape[2] != w || shape[3] != c {
            return Err(Error::Shape {
                op: "forward",
                detail: format!("batch shape {shape:?}, model expects [N, {h}, {w}, {c}]"),
            });
        }

        let input = tape.leaf(batch, track_input);
        let param_vars: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.tensor.clone(), track_params))
            .collect();

        let mut features = Vec::new();
        let mut norm_updates = Vec::new();
        let mut x = input;
        let mut logits = input;
        let mut block_index = 0usize;

        for layer in &self.layers {
            match layer {
                LayerDef::PlainConv {
                    kernel,
                    stride,
                    norm,
                } => {
                    x = tape.conv2d(x, param_vars[*kernel], None, *stride, Padding::Same)?;
                    x = self.apply_norm(tape, x, norm, &param_vars, mode, &mut norm_updates)?;
                    x = tape.apply_activation(Activation::Relu6, x)?;
                    features.push((format!("backbone.{block_index}"), x));
                    block_index += 1;
                }
                LayerDef::Block {
                    expand,
                    depthwise,
                    stride,
                    project,
                    skip,
                } => {
                    let block_in = x;
                    if let Some((k, norm)) = expand {
                        x = tape.conv2d(x, param_vars[*k], None, 1, Padding::Same)?;
                        x = self.apply_norm(tape, x, norm, &param_vars, mode, &mut norm_updates)?;
                        x = tape.apply_activation(Activation::Relu6, x)?;
                    }
                    let (dw, dw_norm) = depthwise;
                    x = tape.depthwise_conv2d(x, param_vars[*dw], *stride, Padding::Same)?;
                    x = self.apply_norm(tape, x, dw_norm, &param_vars, mode, &mut norm_updates)?;
                    x = tape.apply_activation(Activation::Relu6, x)?;
                    let (pk, p_norm) = project;
                    x = tape.conv2d(x, param_vars[*pk], None, 1, Padding::Same)?;
                    x = self.apply_norm(tape, x, p_norm, &param_vars, mode, &mut norm_updates)?;
                    if *skip {
                        x = tape.add(block_in, x)?;
                    }
                    features.push((format!("backbone.{block_index}"), x));
                    block_index += 1;
                }
                LayerDef::Pool => {
                    x = tape.global_avg_pool(x)?;
                }
                LayerDef::Dense {
                    weight,
                    bias,
                    norm,
                    activation,
                    dropconnect,
                } => {
                    let mut w_var = param_vars[*weight];
                    if *dropconnect && mode == NormMode::Train {
                        w_var =
                            tape.dropconnect(w_var, self.spec.dropconnect_rate, rng, mode)?;
                    }
                    x = tape.dense(x, w_var, param_vars[*bias])?;
                    if let Some(n) = norm {
                        x = self.apply_norm(tape, x, n, &param_vars, mode, &mut norm_updates)?;
                    }
                    if norm.is_none() {
                        logits = x;
                    }
                    x = tape.apply_activation(*activation, x)?;
                }
            }
        }

        Ok(Forward {
            input,
            logits,
            output: x,
            param_vars,
            features,
            norm_updates,
        })
    }

    fn apply_norm(
        &self,
        tape: &mut Tape<f32>,
        x: Var,
        norm: &NormRef,
        param_vars: &[Var],
        mode: NormMode,
        norm_updates: &mut Vec<(usize, Var)>,
    ) -> Result<Var> {
        let eps = 1e-5;
        match (self.spec.norm_kind, norm.stat) {
            (NormKind::Batch, Some(si)) => {
                let stat = &self.stats[si];
                let out = tape.batch_norm(
                    x,
                    param_vars[norm.gamma],
                    param_vars[norm.beta],
                    eps,
                    mode,
                    &stat.mean,
                    &stat.var,
                )?;
                if mode == NormMode::Train {
                    norm_updates.push((si, out));
                }
                Ok(out)
            }
            (NormKind::Group { groups }, None) => tape.group_norm(
                x,
                param_vars[norm.gamma],
                param_vars[norm.beta],
                groups,
                eps,
            ),
            _ => unreachable!("norm site kind matches spec.norm_kind by construction"),
        }
    }

    /// Fold the batch statistics recorded by a training forward into the
    /// running statistics: `running = momentum·running + (1−momentum)·batch`.
    pub fn commit_norm_stats(
        &mut self,
        tape: &Tape<f32>,
        forward: &Forward,
        momentum: f32,
    ) -> Result<()> {
        for &(si, var) in &forward.norm_updates {
            let (mean, variance) = tape.norm_batch_stats(var).ok_or(Error::InvalidArg {
                op: "commit_norm_stats",
                detail: "recorded node is not a train-mode batch norm".into(),
            })?;
            let stat = &mut self.stats[si];
            for (r, b) in stat.mean.iter_mut().zip(mean.iter()) {
                *r = momentum * *r + (1.0 - momentum) * b;
            }
            for (r, b) in stat.var.iter_mut().zip(variance.iter()) {
                *r = momentum * *r + (1.0 - momentum) * b;
            }
        }
        Ok(())
    }
}
