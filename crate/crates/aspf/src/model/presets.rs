//! Shipped configurations: the two paper-scale architectures and a tiny
//! variant small enough for smoke training on one core.

use crate::ops::Activation;

use super::{BlockKind, BlockSpec, HeadLayer, ModelSpec, NormKind};

fn plain(out_channels: usize, stride: usize) -> BlockSpec {
    BlockSpec {
        kind: BlockKind::PlainConv,
        out_channels,
        stride,
        expansion: 1,
    }
}

/// `n` inverted-residual blocks, the first at `stride`, the rest at 1.
fn group(blocks: &mut Vec<BlockSpec>, expansion: usize, out_channels: usize, n: usize, stride: usize) {
    for i in 0..n {
        blocks.push(BlockSpec {
            kind: BlockKind::InvertedResidual,
            out_channels,
            stride: if i == 0 { stride } else { 1 },
            expansion,
        });
    }
}

fn head(layers: &[(usize, Activation)]) -> Vec<HeadLayer> {
    layers
        .iter()
        .map(|&(units, activation)| HeadLayer { units, activation })
        .collect()
}

/// Width-contracted low-weight model: alpha 0.35 over an inverted-residual
/// table, 96x96 RGB input, 336/112/1 head with group normalization.
/// 266,825 parameters.
pub fn light_paper() -> ModelSpec {
    let mut blocks = vec![plain(32, 2)];
    group(&mut blocks, 1, 16, 1, 1);
    group(&mut blocks, 6, 24, 2, 2);
    group(&mut blocks, 6, 32, 3, 2);
    group(&mut blocks, 6, 64, 4, 2);
    group(&mut blocks, 6, 96, 1, 1);
    group(&mut blocks, 6, 160, 3, 2);
    group(&mut blocks, 3, 320, 1, 1);
    ModelSpec {
        input_shape: (96, 96, 3),
        alpha: 0.35,
        divisor: 8,
        backbone: blocks,
        head: head(&[
            (336, Activation::Swish),
            (112, Activation::Swish),
            (1, Activation::Sigmoid),
        ]),
        dropconnect_rate: 0.0,
        norm_kind: NormKind::Group { groups: 8 },
    }
}

/// Desk-scale two-class model: shallow MBConv backbone at full width, the
/// 1024/256/32/2 head with batch normalization and dropconnect between the
/// dense layers.
pub fn heavy_desk() -> ModelSpec {
    let mut blocks = vec![plain(32, 2)];
    group(&mut blocks, 1, 16, 1, 1);
    group(&mut blocks, 6, 24, 2, 2);
    group(&mut blocks, 6, 40, 2, 2);
    group(&mut blocks, 6, 80, 2, 2);
    group(&mut blocks, 6, 112, 1, 1);
    ModelSpec {
        input_shape: (96, 96, 3),
        alpha: 1.0,
        divisor: 8,
        backbone: blocks,
        head: head(&[
            (1024, Activation::Swish),
            (256, Activation::Swish),
            (32, Activation::Tanh),
            (2, Activation::Softmax),
        ]),
        dropconnect_rate: 0.15,
        norm_kind: NormKind::Batch,
    }
}

/// Smoke-test model: 32x32 input, three blocks, 16/1 head. 1,937 parameters,
/// trainable to saturation on a desktop core in seconds.
pub fn light_tiny() -> ModelSpec {
    let mut blocks = vec![plain(8, 2)];
    group(&mut blocks, 1, 8, 1, 1);
    group(&mut blocks, 4, 16, 1, 2);
    ModelSpec {
        input_shape: (32, 32, 3),
        alpha: 1.0,
        divisor: 8,
        backbone: blocks,
        head: head(&[(16, Activation::Swish), (1, Activation::Sigmoid)]),
        dropconnect_rate: 0.0,
        norm_kind: NormKind::Group { groups: 8 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        light_paper().validate().unwrap();
        heavy_desk().validate().unwrap();
        light_tiny().validate().unwrap();
    }
}
