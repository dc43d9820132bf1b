//! The ASPF model archive: magic, version, JSON tensor table, raw
//! little-endian payload. Archives are reproducible byte-for-byte: the
//! header is serialized in model order and the payload is packed densely.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec};
use crate::quant::{dequantize_tensor, is_quantizable, quantize_tensor, QuantParams, QuantScheme};

pub const ARCHIVE_MAGIC: [u8; 4] = *b"ASPF";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    F32,
    I8,
}

impl Dtype {
    fn byte_size(self) -> u64 {
        match self {
            Dtype::F32 => 4,
            Dtype::I8 => 1,
        }
    }
}

/// What the tensor feeds when loaded back into a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    Param,
    RunningMean,
    RunningVar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub kind: TensorKind,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    /// Byte offset into the payload (not the file).
    pub offset: u64,
    pub byte_len: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_point: Option<i8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveHeader {
    pub spec: ModelSpec,
    pub tensors: Vec<TensorEntry>,
}

impl ArchiveHeader {
    /// Total elements across `Param` entries.
    pub fn parameter_count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.kind == TensorKind::Param)
            .map(|t| t.shape.iter().product::<usize>())
            .sum()
    }

    pub fn is_quantized(&self) -> bool {
        self.tensors.iter().any(|t| t.dtype == Dtype::I8)
    }
}

fn layout_err(detail: String) -> Error {
    Error::ArchiveLayout { detail }
}

/// Checks the tensor table against the payload length: sizes multiply out,
/// entries stay in range, and no two entries overlap.
fn check_table(tensors: &[TensorEntry], payload_len: u64) -> Result<()> {
    let mut spans: Vec<(u64, u64, &str)> = Vec::with_capacity(tensors.len());
    for t in tensors {
        if t.shape.is_empty() || t.shape.contains(&0) {
            return Err(layout_err(format!("`{}`: degenerate shape {:?}", t.name, t.shape)));
        }
        let numel = t
            .shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| layout_err(format!("`{}`: shape overflows", t.name)))?;
        let expect = numel
            .checked_mul(t.dtype.byte_size())
            .ok_or_else(|| layout_err(format!("`{}`: size overflows", t.name)))?;
        if expect != t.byte_len {
            return Err(layout_err(format!(
                "`{}`: shape {:?} needs {expect} bytes, table says {}",
                t.name, t.shape, t.byte_len
            )));
        }
        let end = t
            .offset
            .checked_add(t.byte_len)
            .ok_or_else(|| layout_err(format!("`{}`: offset overflows", t.name)))?;
        if end > payload_len {
            return Err(Error::TruncatedPayload {
                expected: end,
                found: payload_len,
            });
        }
        match (t.dtype, t.scale, t.zero_point) {
            (Dtype::I8, Some(s), Some(_)) if s > 0.0 && s.is_finite() => {}
            (Dtype::I8, ..) => {
                return Err(layout_err(format!(
                    "`{}`: int8 tensor needs a positive scale and a zero point",
                    t.name
                )))
            }
            (Dtype::F32, None, None) => {}
            (Dtype::F32, ..) => {
                return Err(layout_err(format!(
                    "`{}`: f32 tensor must not carry quantization parameters",
                    t.name
                )))
            }
        }
        spans.push((t.offset, end, &t.name));
    }
    spans.sort();
    for pair in spans.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(layout_err(format!(
                "`{}` and `{}` overlap",
                pair[0].2, pair[1].2
            )));
        }
    }
    Ok(())
}

fn entry_bytes(model: &Model, scheme: Option<QuantScheme>) -> Result<(Vec<TensorEntry>, Vec<u8>)> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    let mut push = |name: &str,
                    kind: TensorKind,
                    shape: Vec<usize>,
                    values: &[f32],
                    payload: &mut Vec<u8>,
                    quantize: bool|
     -> Result<()> {
        let offset = payload.len() as u64;
        let (dtype, scale, zero_point) = if quantize {
            let (params, data) = quantize_tensor(values)?;
            payload.extend(data.iter().map(|&q| q as u8));
            (Dtype::I8, Some(params.scale), Some(params.zero_point))
        } else {
            for v in values {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            (Dtype::F32, None, None)
        };
        tensors.push(TensorEntry {
            name: name.to_string(),
            kind,
            dtype,
            shape,
            offset,
            byte_len: payload.len() as u64 - offset,
            scale,
            zero_point,
        });
        Ok(())
    };

    for p in model.params() {
        let quantize = match scheme {
            Some(QuantScheme::PerTensorSymmetric) => is_quantizable(p.tensor.shape()),
            None => false,
        };
        push(
            &p.name,
            TensorKind::Param,
            p.tensor.shape().to_vec(),
            p.tensor.data(),
            &mut payload,
            quantize,
        )?;
    }
    for s in model.stats() {
        push(&s.name, TensorKind::RunningMean, vec![s.mean.len()], &s.mean, &mut payload, false)?;
        push(&s.name, TensorKind::RunningVar, vec![s.var.len()], &s.var, &mut payload, false)?;
    }
    Ok((tensors, payload))
}

fn write_archive(header: &ArchiveHeader, payload: &[u8], path: &Path) -> Result<()> {
    let json = serde_json::to_string(header).map_err(|e| Error::HeaderParse {
        detail: format!("serializing header: {e}"),
    })?;
    let mut bytes = Vec::with_capacity(16 + json.len() + payload.len());
    bytes.extend_from_slice(&ARCHIVE_MAGIC);
    bytes.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(json.as_bytes());
    bytes.extend_from_slice(payload);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Serializes every tensor as f32. Loading restores the model bitwise.
pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let (tensors, payload) = entry_bytes(model, None)?;
    let header = ArchiveHeader {
        spec: model.spec().clone(),
        tensors,
    };
    write_archive(&header, &payload, path.as_ref())
}

/// Serializes weight tensors as int8 under the given scheme; biases, norm
/// affines, and running statistics stay f32.
pub fn save_model_quantized(
    model: &Model,
    scheme: QuantScheme,
    path: impl AsRef<Path>,
) -> Result<()> {
    let (tensors, payload) = entry_bytes(model, Some(scheme))?;
    let header = ArchiveHeader {
        spec: model.spec().clone(),
        tensors,
    };
    write_archive(&header, &payload, path.as_ref())
}

struct RawArchive {
    header: ArchiveHeader,
    payload_start: usize,
    bytes: Vec<u8>,
}

/// Parses magic, version, and header; validates the tensor table before any
/// payload byte is interpreted.
fn read_archive(path: &Path) -> Result<RawArchive> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    let got = bytes.len().min(4);
    magic[..got].copy_from_slice(&bytes[..got]);
    if magic != ARCHIVE_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    if bytes.len() < 16 {
        return Err(Error::HeaderParse {
            detail: "file ends inside the fixed header".to_string(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != ARCHIVE_VERSION {
        return Err(Error::UnsupportedVersion { found: version });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let payload_start = 16usize.checked_add(header_len).ok_or(Error::HeaderParse {
        detail: "header length overflows".to_string(),
    })?;
    if payload_start > bytes.len() {
        return Err(Error::HeaderParse {
            detail: format!(
                "header claims {header_len} bytes, file has {}",
                bytes.len() - 16
            ),
        });
    }
    let header: ArchiveHeader =
        serde_json::from_slice(&bytes[16..payload_start]).map_err(|e| Error::HeaderParse {
            detail: e.to_string(),
        })?;
    header.spec.validate().map_err(|e| Error::HeaderParse {
        detail: format!("embedded spec invalid: {e}"),
    })?;
    check_table(&header.tensors, (bytes.len() - payload_start) as u64)?;
    Ok(RawArchive {
        header,
        payload_start,
        bytes,
    })
}

/// Header without the payload, for inspection and size accounting.
pub fn read_header(path: impl AsRef<Path>) -> Result<ArchiveHeader> {
    Ok(read_archive(path.as_ref())?.header)
}

fn decode_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect()
}

/// Rebuilds the model from an archive. Int8 tensors are dequantized to f32,
/// so quantized archives load straight into the same inference path.
pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let raw = read_archive(path.as_ref())?;
    let mut model = Model::build(&raw.header.spec, 0).map_err(|e| Error::HeaderParse {
        detail: format!("embedded spec invalid: {e}"),
    })?;
    let payload = &raw.bytes[raw.payload_start..];

    let mut param_seen = vec![false; model.params().len()];
    let mut mean_seen = vec![false; model.stats().len()];
    let mut var_seen = vec![false; model.stats().len()];

    for t in &raw.header.tensors {
        let data = &payload[t.offset as usize..(t.offset + t.byte_len) as usize];
        let values = match t.dtype {
            Dtype::F32 => decode_f32(data),
            Dtype::I8 => {
                let q: Vec<i8> = data.iter().map(|&b| b as i8).collect();
                let params = QuantParams {
                    scale: t.scale.expect("validated"),
                    zero_point: t.zero_point.expect("validated"),
                };
                dequantize_tensor(params, &q)
            }
        };
        match t.kind {
            TensorKind::Param => {
                let i = model
                    .params()
                    .iter()
                    .position(|p| p.name == t.name)
                    .ok_or_else(|| layout_err(format!("unknown parameter `{}`", t.name)))?;
                if std::mem::replace(&mut param_seen[i], true) {
                    return Err(layout_err(format!("parameter `{}` listed twice", t.name)));
                }
                let tensor = &mut model.params_mut()[i].tensor;
                if tensor.shape() != &t.shape[..] {
                    return Err(layout_err(format!(
                        "`{}`: archive shape {:?}, model expects {:?}",
                        t.name,
                        t.shape,
                        tensor.shape()
                    )));
                }
                tensor.data_mut().copy_from_slice(&values);
            }
            TensorKind::RunningMean | TensorKind::RunningVar => {
                let i = model
                    .stats()
                    .iter()
                    .position(|s| s.name == t.name)
                    .ok_or_else(|| layout_err(format!("unknown statistic `{}`", t.name)))?;
                let seen = if t.kind == TensorKind::RunningMean {
                    &mut mean_seen[i]
                } else {
                    &mut var_seen[i]
                };
                if std::mem::replace(seen, true) {
                    return Err(layout_err(format!("statistic `{}` listed twice", t.name)));
                }
                let stat = &mut model.stats_mut()[i];
                let slot = if t.kind == TensorKind::RunningMean {
                    &mut stat.mean
                } else {
                    &mut stat.var
                };
                if slot.len() != values.len() {
                    return Err(layout_err(format!(
                        "`{}`: archive length {}, model expects {}",
                        t.name,
                        values.len(),
                        slot.len()
                    )));
                }
                slot.copy_from_slice(&values);
            }
        }
    }

    if let Some(i) = param_seen.iter().position(|&s| !s) {
        return Err(layout_err(format!(
            "archive missing parameter `{}`",
            model.params()[i].name
        )));
    }
    if let Some(i) = mean_seen
        .iter()
        .zip(&var_seen)
        .position(|(&m, &v)| !m || !v)
    {
        return Err(layout_err(format!(
            "archive missing statistics for `{}`",
            model.stats()[i].name
        )));
    }
    Ok(model)
}

/// Byte accounting for a float/quantized archive pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeReport {
    pub float_total: u64,
    pub float_payload: u64,
    pub quant_total: u64,
    pub quant_payload: u64,
    /// quant_total / float_total; pinned to 1 for empty models.
    pub ratio: f64,
    pub float_params: usize,
    pub quant_params: usize,
    pub warning: Option<String>,
}

impl std::fmt::Display for SizeReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "float:     {} bytes total ({} payload), {} parameters",
            self.float_total, self.float_payload, self.float_params
        )?;
        writeln!(
            f,
            "quantized: {} bytes total ({} payload), {} parameters",
            self.quant_total, self.quant_payload, self.quant_params
        )?;
        write!(f, "ratio:     {:.4}", self.ratio)?;
        if let Some(w) = &self.warning {
            write!(f, "\nwarning:   {w}")?;
        }
        Ok(())
    }
}

pub fn size_report(
    float_path: impl AsRef<Path>,
    quant_path: impl AsRef<Path>,
) -> Result<SizeReport> {
    let sizes = |path: &Path| -> Result<(u64, u64, usize)> {
        let total = fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
        let header = read_header(path)?;
        let payload: u64 = header.tensors.iter().map(|t| t.byte_len).sum();
        Ok((total, payload, header.parameter_count()))
    };
    let (float_total, float_payload, float_params) = sizes(float_path.as_ref())?;
    let (quant_total, quant_payload, quant_params) = sizes(quant_path.as_ref())?;
    let (ratio, warning) = if float_payload == 0 {
        (1.0, Some("empty model: ratio pinned to 1.0".to_string()))
    } else {
        (quant_total as f64 / float_total as f64, None)
    };
    Ok(SizeReport {
        float_total,
        float_payload,
        quant_total,
        quant_payload,
        ratio,
        float_params,
        quant_params,
        warning,
    })
}
