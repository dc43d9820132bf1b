//! Attention maps, input saliency, kernel grids, and heatmap overlays.

use crate::error::{Error, Result};
use crate::img::{resize_plane, Image};
use crate::model::{Forward, HeadKind, Model};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::train::heat_color;

/// Which output the attribution explains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetClass {
    Fake,
    Real,
}

impl TargetClass {
    /// Column of the two-unit softmax head: [fake, real].
    fn column(self) -> usize {
        match self {
            TargetClass::Fake => 0,
            TargetClass::Real => 1,
        }
    }
}

/// Single-plane attribution map, row-major, every value in [0, 1]. Unless
/// the map is identically zero its maximum is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
    pub source_layer: String,
    pub target_class: TargetClass,
}

impl Heatmap {
    /// Gray rendering, 0..=255.
    pub fn to_image(&self) -> Result<Image> {
        let data = self
            .values
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        Image::new(self.width, self.height, 1, data)
    }
}

/// Divides by the max when it is positive; a flat zero map is left alone.
fn normalize_by_max(values: &mut [f32]) {
    let max = values.iter().fold(0.0f32, |m, &v| m.max(v));
    if max > 0.0 {
        for v in values.iter_mut() {
            *v /= max;
        }
    }
}

/// One-image batch from a [H,W,3] or [1,H,W,3] tensor.
fn single_batch(input: &Tensor<f32>) -> Result<Tensor<f32>> {
    match input.shape() {
        [h, w, c] => Tensor::new(&[1, *h, *w, *c], input.data().to_vec()),
        [1, _, _, _] => Ok(input.clone()),
        other => Err(Error::Shape {
            op: "explain",
            detail: format!("expected one [H,W,3] image, got {other:?}"),
        }),
    }
}

/// Scalar score to differentiate and the sign its gradient carries. The
/// score is the pre-activation logit: for the sigmoid head the fake score is
/// the negated logit, folded into the sign.
fn score_var(
    model: &Model,
    tape: &mut Tape<f32>,
    forward: &Forward,
    target: TargetClass,
) -> Result<(Var, f32)> {
    match model.head_kind() {
        HeadKind::Sigmoid1 => {
            let score = tape.pick_scalar(forward.logits, 0)?;
            let sign = match target {
                TargetClass::Real => 1.0,
                TargetClass::Fake => -1.0,
            };
            Ok((score, sign))
        }
        HeadKind::Softmax2 => Ok((tape.pick_scalar(forward.logits, target.column())?, 1.0)),
    }
}

fn resolve_feature(model: &Model, forward: &Forward, name: &str) -> Result<Var> {
    if let Some(&(_, var)) = forward.features.iter().find(|(n, _)| n == name) {
        return Ok(var);
    }
    let head_layers = model.spec().head.len();
    let is_head = name
        .strip_prefix("head.")
        .and_then(|rest| rest.parse::<usize>().ok())
        .is_some_and(|j| j < head_layers);
    if is_head || name == "pool" {
        return Err(Error::NotConvLayer { name: name.to_string() });
    }
    Err(Error::UnknownLayer { name: name.to_string() })
}

/// Name of the deepest backbone feature map, the default attention target.
pub fn default_cam_layer(model: &Model) -> String {
    format!("backbone.{}", model.spec().backbone.len() - 1)
}

/// Grad-CAM over one image: channel weights are the spatial means of
/// d(score)/d(feature map); the map is ReLU(Σ_k w_k·A_k) normalized to [0,1]
/// by its max. `target_layer` of `None` uses the deepest backbone block.
pub fn grad_cam(
    model: &Model,
    input: &Tensor<f32>,
    target_layer: Option<&str>,
    target: TargetClass,
) -> Result<Heatmap> {
    let layer = target_layer
        .map(str::to_string)
        .unwrap_or_else(|| default_cam_layer(model));
    let batch = single_batch(input)?;
    let mut tape = Tape::new();
    let forward = model.forward_traced(&mut tape, batch)?;
    let feature = resolve_feature(model, &forward, &layer)?;
    let (score, sign) = score_var(model, &mut tape, &forward, target)?;
    tape.backward(score)?;

    let shape = tape.value(feature).shape().to_vec();
    let (fh, fw, fc) = (shape[1], shape[2], shape[3]);
    let activations = tape.value(feature).data().to_vec();
    // a feature the score never touches has no gradient: zero contribution
    let grads = match tape.grad(feature) {
        Some(g) => g.to_vec(),
        None => vec![0.0; activations.len()],
    };

    let spatial = (fh * fw) as f32;
    let mut weights = vec![0.0f32; fc];
    for (i, g) in grads.iter().enumerate() {
        weights[i % fc] += g * sign;
    }
    for w in weights.iter_mut() {
        *w /= spatial;
    }

    let mut values = vec![0.0f32; fh * fw];
    for (pixel, value) in values.iter_mut().enumerate() {
        let mut sum = 0.0;
        for (k, w) in weights.iter().enumerate() {
            sum += w * activations[pixel * fc + k];
        }
        *value = sum.max(0.0);
    }
    normalize_by_max(&mut values);
    Ok(Heatmap {
        height: fh,
        width: fw,
        values,
        source_layer: layer,
        target_class: target,
    })
}

/// Input saliency: per-pixel max over channels of |d(score)/d(input)|,
/// normalized by its max.
pub fn saliency(model: &Model, input: &Tensor<f32>, target: TargetClass) -> Result<Heatmap> {
    let batch = single_batch(input)?;
    let mut tape = Tape::new();
    let forward = model.forward_traced(&mut tape, batch)?;
    let (score, _) = score_var(model, &mut tape, &forward, target)?;
    tape.backward(score)?;

    let shape = tape.value(forward.input).shape().to_vec();
    let (h, w, c) = (shape[1], shape[2], shape[3]);
    let mut values = vec![0.0f32; h * w];
    if let Some(grads) = tape.grad(forward.input) {
        for (pixel, value) in values.iter_mut().enumerate() {
            *value = grads[pixel * c..(pixel + 1) * c]
                .iter()
                .fold(0.0f32, |m, g| m.max(g.abs()));
        }
    }
    normalize_by_max(&mut values);
    Ok(Heatmap {
        height: h,
        width: w,
        values,
        source_layer: "input".to_string(),
        target_class: target,
    })
}

/// Blends `alpha·colormap(heatmap) + (1−alpha)·image`, upsampling the map
/// bilinearly to the image size. The colormap is the blue→red ramp shared
/// with the confusion heatmap. Gray images are widened to RGB.
pub fn overlay(heatmap: &Heatmap, image: &Image, alpha: f32) -> Result<Image> {
    if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArg {
            op: "overlay",
            detail: format!("alpha {alpha} outside [0, 1]"),
        });
    }
    let plane = resize_plane(
        &heatmap.values,
        heatmap.width,
        heatmap.height,
        image.width,
        image.height,
    );
    let mut data = Vec::with_capacity(image.width * image.height * 3);
    for (pixel, &v) in plane.iter().enumerate() {
        let heat = heat_color(f64::from(v.clamp(0.0, 1.0)));
        for (ch, &hot) in heat.iter().enumerate() {
            let base = if image.channels == 3 {
                image.data[pixel * 3 + ch]
            } else {
                image.data[pixel]
            } as f32;
            let blended = alpha * hot as f32 + (1.0 - alpha) * base;
            data.push(blended.round().clamp(0.0, 255.0) as u8);
        }
    }
    Image::new(image.width, image.height, 3, data)
}

/// Renders a conv layer's kernels as a near-square tile grid with 1-pixel
/// black separators. Each kernel is min-max normalized on its own; a
/// zero-range kernel renders mid-gray. 3-input-channel kernels become color
/// tiles; depthwise and single-channel kernels gray; wider input depths are
/// averaged to gray.
pub fn dump_kernels(model: &Model, layer: &str) -> Result<Image> {
    let tensor = model
        .param_by_name(layer)
        .ok_or_else(|| Error::UnknownLayer { name: layer.to_string() })?;
    let shape = tensor.shape();
    let (kh, kw, cin, n) = match shape {
        [kh, kw, cin, cout] => (*kh, *kw, *cin, *cout),
        // depthwise kernels hold one plane per channel
        [kh, kw, c] => (*kh, *kw, 1, *c),
        _ => return Err(Error::NotConvLayer { name: layer.to_string() }),
    };
    let color = cin == 3;
    let out_c = if color { 3 } else { 1 };

    // tile k, pixel (y, x), render channel ch -> one normalized sample
    let sample = |k: usize, y: usize, x: usize, ch: usize| -> f32 {
        let data = tensor.data();
        if shape.len() == 3 {
            return data[(y * kw + x) * n + k];
        }
        if color {
            return data[((y * kw + x) * cin + ch) * n + k];
        }
        let mut sum = 0.0;
        for c in 0..cin {
            sum += data[((y * kw + x) * cin + c) * n + k];
        }
        sum / cin as f32
    };

    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let grid_w = cols * kw + cols - 1;
    let grid_h = rows * kh + rows - 1;
    let mut data = vec![0u8; grid_w * grid_h * out_c];

    for k in 0..n {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for y in 0..kh {
            for x in 0..kw {
                for ch in 0..out_c {
                    let v = sample(k, y, x, ch);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        let origin_y = (k / cols) * (kh + 1);
        let origin_x = (k % cols) * (kw + 1);
        for y in 0..kh {
            for x in 0..kw {
                for ch in 0..out_c {
                    let px = if hi > lo {
                        let v = (sample(k, y, x, ch) - lo) / (hi - lo);
                        (v * 255.0).round() as u8
                    } else {
                        128
                    };
                    let at = ((origin_y + y) * grid_w + origin_x + x) * out_c + ch;
                    data[at] = px;
                }
            }
        }
    }
    Image::new(grid_w, grid_h, out_c, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, Model};

    #[test]
    fn normalize_leaves_zero_map_alone() {
        let mut v = vec![0.0; 4];
        normalize_by_max(&mut v);
        assert_eq!(v, vec![0.0; 4]);
    }

    #[test]
    fn normalize_peaks_at_exactly_one() {
        let mut v = vec![0.25, 0.5, 0.125];
        normalize_by_max(&mut v);
        assert_eq!(v[1], 1.0);
        assert_eq!(v, vec![0.5, 1.0, 0.25]);
    }

    #[test]
    fn default_layer_is_last_block() {
        let model = Model::build(&presets::light_tiny(), 0).unwrap();
        assert_eq!(default_cam_layer(&model), "backbone.2");
    }

    #[test]
    fn unknown_and_non_conv_layers_are_distinguished() {
        let model = Model::build(&presets::light_tiny(), 0).unwrap();
        let input = Tensor::<f32>::full(&[32, 32, 3], 0.5);
        let err = grad_cam(&model, &input, Some("backbone.9"), TargetClass::Real).unwrap_err();
        assert!(matches!(err, Error::UnknownLayer { .. }), "{err}");
        let err = grad_cam(&model, &input, Some("head.0"), TargetClass::Real).unwrap_err();
        assert!(matches!(err, Error::NotConvLayer { .. }), "{err}");
        let err = dump_kernels(&model, "head.0.weight").unwrap_err();
        assert!(matches!(err, Error::NotConvLayer { .. }), "{err}");
        let err = dump_kernels(&model, "nope").unwrap_err();
        assert!(matches!(err, Error::UnknownLayer { .. }), "{err}");
    }

    #[test]
    fn overlay_alpha_extremes() {
        let hm = Heatmap {
            height: 2,
            width: 2,
            values: vec![0.0, 1.0, 0.5, 0.25],
            source_layer: "backbone.0".to_string(),
            target_class: TargetClass::Real,
        };
        let img = Image::new(2, 2, 3, vec![90; 12]).unwrap();
        let same = overlay(&hm, &img, 0.0).unwrap();
        assert_eq!(same.data, img.data);
        let pure = overlay(&hm, &img, 1.0).unwrap();
        assert_eq!(&pure.data[0..3], &[0, 0, 255]); // v=0 is pure blue
        assert_eq!(&pure.data[3..6], &[255, 0, 0]); // v=1 is pure red
    }

    #[test]
    fn overlay_midpoint_blend_is_exact() {
        let hm = Heatmap {
            height: 1,
            width: 1,
            values: vec![1.0],
            source_layer: "backbone.0".to_string(),
            target_class: TargetClass::Real,
        };
        let img = Image::new(2, 1, 3, vec![100; 6]).unwrap();
        let out = overlay(&hm, &img, 0.5).unwrap();
        // 0.5·[255,0,0] + 0.5·[100,100,100] = [177.5, 50, 50]
        assert_eq!(&out.data[0..3], &[178, 50, 50]);
    }

    #[test]
    fn gray_image_overlay_widens_to_rgb() {
        let hm = Heatmap {
            height: 1,
            width: 1,
            values: vec![0.0],
            source_layer: "backbone.0".to_string(),
            target_class: TargetClass::Real,
        };
        let img = Image::new(2, 2, 1, vec![10, 20, 30, 40]).unwrap();
        let out = overlay(&hm, &img, 0.0).unwrap();
        assert_eq!(out.channels, 3);
        assert_eq!(&out.data[0..3], &[10, 10, 10]);
    }

    #[test]
    fn constant_kernel_renders_mid_gray() {
        let mut model = Model::build(&presets::light_tiny(), 0).unwrap();
        let name = "backbone.0.conv.kernel";
        let idx = model
            .params()
            .iter()
            .position(|p| p.name == name)
            .unwrap();
        model.params_mut()[idx]
            .tensor
            .data_mut()
            .fill(0.25);
        let grid = dump_kernels(&model, name).unwrap();
        // every tile is constant, so everything except separators is 128
        let mids = grid.data.iter().filter(|&&v| v == 128).count();
        let seps = grid.data.iter().filter(|&&v| v == 0).count();
        assert_eq!(mids + seps, grid.data.len());
        assert!(mids > 0);
    }

    #[test]
    fn depthwise_kernels_render_gray_tiles() {
        let model = Model::build(&presets::light_tiny(), 0).unwrap();
        let grid = dump_kernels(&model, "backbone.1.depthwise.kernel").unwrap();
        assert_eq!(grid.channels, 1);
        // 8 tiles of 3x3: 3 cols x 3 rows grid, one empty cell
        assert_eq!((grid.width, grid.height), (3 * 3 + 2, 3 * 3 + 2));
    }
}
