//! Per-tensor symmetric int8 quantization of trained weights.

use crate::error::{Error, Result};

/// Affine mapping between float and int8: x ≈ (q − zero_point)·scale.
/// The symmetric scheme always uses zero_point 0; the field exists so the
/// archive format states its convention explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub scale: f32,
    pub zero_point: i8,
}

/// Quantization schemes the archive can hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantScheme {
    /// One scale per tensor, zero_point 0, q = clamp(round(x/scale), -127, 127)
    /// with scale = max|x|/127.
    PerTensorSymmetric,
}

/// Quantizes one tensor. An all-zero tensor maps to scale 1 and a zero
/// payload rather than an error.
pub fn quantize_tensor(values: &[f32]) -> Result<(QuantParams, Vec<i8>)> {
    let mut max_abs = 0.0f32;
    for &v in values {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "quantize_tensor".to_string(),
            });
        }
        max_abs = max_abs.max(v.abs());
    }
    let scale = if max_abs > 0.0 { max_abs / 127.0 } else { 1.0 };
    let data = values
        .iter()
        .map(|&v| (v / scale).round().clamp(-127.0, 127.0) as i8)
        .collect();
    Ok((QuantParams { scale, zero_point: 0 }, data))
}

pub fn dequantize_tensor(params: QuantParams, data: &[i8]) -> Vec<f32> {
    data.iter()
        .map(|&q| (i32::from(q) - i32::from(params.zero_point)) as f32 * params.scale)
        .collect()
}

/// Weight tensors (rank ≥ 2 kernels and dense matrices) are quantized;
/// rank-1 vectors (biases, norm affines) stay f32.
pub fn is_quantizable(shape: &[usize]) -> bool {
    shape.len() >= 2
}
