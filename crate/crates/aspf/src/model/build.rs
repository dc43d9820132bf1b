//! Skeleton construction and seeded initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ops::Activation;
use crate::tensor::Tensor;

use super::{
    BlockKind, LayerDef, Model, ModelSpec, NormKind, NormRef, Param, RunningStat,
};

/// Width contraction: `base·alpha` rounded to the nearest multiple of
/// `divisor`, floored at `divisor`, bumped up one step if rounding lost more
/// than 10% of the scaled value.
pub fn round_filters(base: usize, alpha: f64, divisor: usize) -> usize {
    let scaled = base as f64 * alpha;
    let mut out = ((scaled / divisor as f64).round() as usize) * divisor;
    out = out.max(divisor);
    if (out as f64) < 0.9 * scaled {
        out += divisor;
    }
    out
}

/// Collects parameters, running stats, and layer defs during construction.
struct Builder {
    rng: ChaCha8Rng,
    params: Vec<Param>,
    stats: Vec<RunningStat>,
    norm_kind: NormKind,
}

impl Builder {
    fn push_param(&mut self, name: String, tensor: Tensor<f32>) -> usize {
        self.params.push(Param { name, tensor });
        self.params.len() - 1
    }

    fn fan_in_param(&mut self, name: String, shape: &[usize], fan_in: usize) -> usize {
        let t = Tensor::rand_fan_in(shape, fan_in, &mut self.rng);
        self.push_param(name, t)
    }

    /// Norm site over `channels`: gamma=1, beta=0, plus running stats for
    /// batch norm. Checks group divisibility where it applies.
    fn norm(&mut self, prefix: &str, channels: usize) -> Result<NormRef> {
        if let NormKind::Group { groups } = self.norm_kind {
            if !channels.is_multiple_of(groups) {
                return Err(Error::Config {
                    detail: format!(
                        "{prefix}: {channels} channels not divisible by {groups} norm groups"
                    ),
                });
            }
        }
        let gamma = self.push_param(format!("{prefix}.norm.gamma"), Tensor::full(&[channels], 1.0));
        let beta = self.push_param(format!("{prefix}.norm.beta"), Tensor::zeros(&[channels]));
        let stat = match self.norm_kind {
            NormKind::Batch => {
                self.stats.push(RunningStat {
                    name: format!("{prefix}.norm"),
                    mean: vec![0.0; channels],
                    var: vec![1.0; channels],
                });
                Some(self.stats.len() - 1)
            }
            NormKind::Group { .. } => None,
        };
        Ok(NormRef { gamma, beta, stat })
    }
}

impl Model {
    /// Realize a spec with seeded fan-in uniform initialization. The same
    /// spec and seed always produce bitwise-identical parameters.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Model> {
        spec.validate()?;
        let mut b = Builder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: Vec::new(),
            stats: Vec::new(),
            norm_kind: spec.norm_kind,
        };
        let mut layers = Vec::new();
        let mut channels = spec.input_shape.2;

        for (i, block) in spec.backbone.iter().enumerate() {
            let out_ch = round_filters(block.out_channels, spec.alpha, spec.divisor);
            let prefix = format!("backbone.{i}");
            match block.kind {
                BlockKind::PlainConv => {
                    let kernel = b.fan_in_param(
                        format!("{prefix}.conv.kernel"),
                        &[3, 3, channels, out_ch],
                        9 * channels,
                    );
                    let norm = b.norm(&format!("{prefix}.conv"), out_ch)?;
                    layers.push(LayerDef::PlainConv {
                        kernel,
                        stride: block.stride,
                        norm,
                    });
                }
                BlockKind::InvertedResidual => {
                    let hidden = channels * block.expansion;
                    let expand = if block.expansion > 1 {
                        let k = b.fan_in_param(
                            format!("{prefix}.expand.kernel"),
                            &[1, 1, channels, hidden],
                            channels,
                        );
                        Some((k, b.norm(&format!("{prefix}.expand"), hidden)?))
                    } else {
                        None
                    };
                    let dw = b.fan_in_param(
                        format!("{prefix}.depthwise.kernel"),
                        &[3, 3, hidden],
                        9,
                    );
                    let dw_norm = b.norm(&format!("{prefix}.depthwise"), hidden)?;
                    let proj = b.fan_in_param(
                        format!("{prefix}.project.kernel"),
                        &[1, 1, hidden, out_ch],
                        hidden,
                    );
                    let proj_norm = b.norm(&format!("{prefix}.project"), out_ch)?;
                    layers.push(LayerDef::Block {
                        expand,
                        depthwise: (dw, dw_norm),
                        stride: block.stride,
                        project: (proj, proj_norm),
                        skip: block.stride == 1 && channels == out_ch,
                    });
                }
            }
            channels = out_ch;
        }

        layers.push(LayerDef::Pool);

        let last = spec.head.len() - 1;
        for (j, layer) in spec.head.iter().enumerate() {
            let prefix = format!("head.{j}");
            let weight = b.fan_in_param(
                format!("{prefix}.weight"),
                &[channels, layer.units],
                channels,
            );
            let bias = b.push_param(format!("{prefix}.bias"), Tensor::zeros(&[layer.units]));
            let norm = if j < last {
                Some(b.norm(&prefix, layer.units)?)
            } else {
                None
            };
            layers.push(LayerDef::Dense {
                weight,
                bias,
                norm,
                activation: layer.activation,
                dropconnect: spec.dropconnect_rate > 0.0 && j > 0,
            });
            channels = layer.units;
        }

        Ok(Model {
            spec: spec.clone(),
            params: b.params,
            stats: b.stats,
            layers,
        })
    }

    /// Light variant: classifier must be a single sigmoid unit.
    pub fn build_light(spec: &ModelSpec, seed: u64) -> Result<Model> {
        let last = spec.head.last().ok_or(Error::Config {
            detail: "head has no layers".into(),
        })?;
        if !(last.units == 1 && last.activation == Activation::Sigmoid) {
            return Err(Error::Config {
                detail: format!(
                    "light model needs a 1-unit sigmoid classifier, got {} + {:?}",
                    last.units, last.activation
                ),
            });
        }
        Model::build(spec, seed)
    }

    /// Heavy variant: classifier must be a 2-unit softmax ([fake, real]).
    pub fn build_heavy(spec: &ModelSpec, seed: u64) -> Result<Model> {
        let last = spec.head.last().ok_or(Error::Config {
            detail: "head has no layers".into(),
        })?;
        if !(last.units == 2 && last.activation == Activation::Softmax) {
            return Err(Error::Config {
                detail: format!(
                    "heavy model needs a 2-unit softmax classifier, got {} + {:?}",
                    last.units, last.activation
                ),
            });
        }
        Model::build(spec, seed)
    }
}
