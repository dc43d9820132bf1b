//! Declarative model construction: a width-contracted inverted-residual
//! backbone feeding a dense head, described by [`ModelSpec`] and realized as
//! a flat list of named parameter tensors plus a layer program.

mod build;
mod forward;
pub mod presets;

pub use build::round_filters;
pub use forward::Forward;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::Activation;
use crate::tensor::Tensor;

/// Architecture description. `alpha` contracts every backbone width through
/// [`round_filters`]; head sizes are taken literally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// (H, W, C) of one input image; C must be 3.
    pub input_shape: (usize, usize, usize),
    pub alpha: f64,
    #[serde(default = "default_divisor")]
    pub divisor: usize,
    pub backbone: Vec<BlockSpec>,
    pub head: Vec<HeadLayer>,
    #[serde(default)]
    pub dropconnect_rate: f64,
    pub norm_kind: NormKind,
}

fn default_divisor() -> usize {
    8
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub kind: BlockKind,
    /// Pre-contraction channel count; the realized width is
    /// `round_filters(out_channels, alpha, divisor)`.
    pub out_channels: usize,
    pub stride: usize,
    #[serde(default = "default_expansion")]
    pub expansion: usize,
}

fn default_expansion() -> usize {
    1
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// 3x3 convolution + norm + relu6 (the stem).
    PlainConv,
    /// Expand (1x1) -> depthwise 3x3 -> project (1x1), linear bottleneck,
    /// skip connection iff stride 1 and equal channels.
    InvertedResidual,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadLayer {
    pub units: usize,
    pub activation: Activation,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NormKind {
    Batch,
    Group { groups: usize },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::Config { detail });
        let (h, w, c) = self.input_shape;
        if c != 3 {
            return bad(format!("input must have 3 channels, got {c}"));
        }
        if h < 8 || w < 8 {
            return bad(format!("input {h}x{w} below the 8x8 minimum"));
        }
        if self.alpha <= 0.0 || !self.alpha.is_finite() {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.divisor == 0 {
            return bad("divisor must be at least 1".into());
        }
        if self.backbone.is_empty() {
            return bad("backbone has no blocks".into());
        }
        for (i, b) in self.backbone.iter().enumerate() {
            if b.stride != 1 && b.stride != 2 {
                return bad(format!("block {i}: stride {} not in {{1,2}}", b.stride));
            }
            if b.expansion == 0 {
                return bad(format!("block {i}: expansion must be at least 1"));
            }
            if b.out_channels == 0 {
                return bad(format!("block {i}: out_channels must be at least 1"));
            }
        }
        if self.head.is_empty() {
            return bad("head has no layers".into());
        }
        for (j, l) in self.head.iter().enumerate() {
            if l.units == 0 {
                return bad(format!("head layer {j}: units must be at least 1"));
            }
        }
        let last = self.head.last().expect("nonempty");
        let classifier_ok = matches!(
            (last.units, last.activation),
            (1, Activation::Sigmoid) | (2, Activation::Softmax)
        );
        if !classifier_ok {
            return bad(format!(
                "last head layer must be 1 unit + sigmoid or 2 units + softmax, \
                 got {} units + {:?}",
                last.units, last.activation
            ));
        }
        if !(0.0..1.0).contains(&self.dropconnect_rate) {
            return bad(format!(
                "dropconnect_rate must lie in [0,1), got {}",
                self.dropconnect_rate
            ));
        }
        if let NormKind::Group { groups } = self.norm_kind {
            if groups == 0 {
                return bad("group norm needs at least 1 group".into());
            }
        }
        Ok(())
    }
}

/// One named trainable tensor.
pub struct Param {
    pub name: String,
    pub tensor: Tensor<f32>,
}

/// Running mean/variance pair owned by one batch-norm site.
pub struct RunningStat {
    pub name: String,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

/// Reference to one normalization site: affine parameter indices plus, for
/// batch norm, the index of its running statistics.
#[derive(Clone, Debug)]
pub(crate) struct NormRef {
    pub gamma: usize,
    pub beta: usize,
    pub stat: Option<usize>,
}

/// Realized layer program, indices into the parameter list.
pub(crate) enum LayerDef {
    PlainConv {
        kernel: usize,
        stride: usize,
        norm: NormRef,
    },
    Block {
        expand: Option<(usize, NormRef)>,
        depthwise: (usize, NormRef),
        stride: usize,
        project: (usize, NormRef),
        skip: bool,
    },
    Pool,
    Dense {
        weight: usize,
        bias: usize,
        norm: Option<NormRef>,
        activation: Activation,
        dropconnect: bool,
    },
}

/// A realized model: spec, parameters, running statistics, layer program.
pub struct Model {
    spec: ModelSpec,
    params: Vec<Param>,
    stats: Vec<RunningStat>,
    pub(crate) layers: Vec<LayerDef>,
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn stats(&self) -> &[RunningStat] {
        &self.stats
    }

    pub fn stats_mut(&mut self) -> &mut [RunningStat] {
        &mut self.stats
    }

    pub fn param_by_name(&self, name: &str) -> Option<&Tensor<f32>> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.tensor)
    }

    /// Sum of trainable tensor sizes; running statistics excluded.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Names of the backbone feature maps recorded by a forward pass,
    /// in network order.
    pub fn feature_names(&self) -> Vec<String> {
        (0..self.spec.backbone.len())
            .map(|i| format!("backbone.{i}"))
            .collect()
    }

    /// Classifier convention, decided by the validated spec.
    pub fn head_kind(&self) -> HeadKind {
        match self.spec.head.last() {
            Some(layer) if layer.units == 2 => HeadKind::Softmax2,
            _ => HeadKind::Sigmoid1,
        }
    }

    /// Override the dropconnect rate after construction. The rate applies to
    /// every dense layer past the first; 0 disables dropconnect entirely.
    pub fn set_dropconnect_rate(&mut self, rate: f64) -> Result<()> {
        if !rate.is_finite() || !(0.0..1.0).contains(&rate) {
            return Err(Error::Config {
                detail: format!("dropconnect rate {rate} must be in [0, 1)"),
            });
        }
        self.spec.dropconnect_rate = rate;
        let mut dense_idx = 0;
        for layer in &mut self.layers {
            if let LayerDef::Dense { dropconnect, .. } = layer {
                *dropconnect = rate > 0.0 && dense_idx > 0;
                dense_idx += 1;
            }
        }
        Ok(())
    }

    /// Copy of every trainable value and running statistic.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            params: self.params.iter().map(|p| p.tensor.data().to_vec()).collect(),
            stats: self
                .stats
                .iter()
                .map(|s| (s.mean.clone(), s.var.clone()))
                .collect(),
        }
    }

    /// Write a snapshot taken from this same architecture back in place.
    pub fn restore(&mut self, snapshot: &Snapshot) -> Result<()> {
        if snapshot.params.len() != self.params.len() || snapshot.stats.len() != self.stats.len() {
            return Err(Error::InvalidArg {
                op: "Model::restore",
                detail: "snapshot layout does not match the model".into(),
            });
        }
        for (p, saved) in self.params.iter_mut().zip(&snapshot.params) {
            if p.tensor.numel() != saved.len() {
                return Err(Error::InvalidArg {
                    op: "Model::restore",
                    detail: format!("`{}`: size {} vs snapshot {}", p.name, p.tensor.numel(), saved.len()),
                });
            }
            p.tensor.data_mut().copy_from_slice(saved);
        }
        for (s, (mean, var)) in self.stats.iter_mut().zip(&snapshot.stats) {
            if s.mean.len() != mean.len() || s.var.len() != var.len() {
                return Err(Error::InvalidArg {
                    op: "Model::restore",
                    detail: format!("`{}`: statistic size mismatch", s.name),
                });
            }
            s.mean.copy_from_slice(mean);
            s.var.copy_from_slice(var);
        }
        Ok(())
    }
}

/// Which classifier the model ends in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// Single sigmoid unit: probability of "real".
    Sigmoid1,
    /// Two-unit softmax: [fake, real].
    Softmax2,
}

/// Saved parameter and running-statistic values, detached from the model.
#[derive(Clone)]
pub struct Snapshot {
    params: Vec<Vec<f32>>,
    stats: Vec<(Vec<f32>, Vec<f32>)>,
}
