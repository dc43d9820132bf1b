//! Decoding manifests into training tensors.

use std::path::Path;

use crate::error::{Error, Result};
use crate::img::Image;
use crate::tensor::Tensor;
use crate::train::Dataset;

use super::manifest::{Label, Manifest};

/// Decodes one crop to `(out_h, out_w)` RGB unit-range pixels; grayscale
/// crops are replicated across the three channels.
pub fn load_pixels(path: &Path, out_size: (usize, usize)) -> Result<Vec<f32>> {
    let (out_h, out_w) = out_size;
    let img = Image::read(path)?.resize_bilinear(out_w, out_h)?;
    let px = img.unit_pixels();
    if img.channels == 3 {
        return Ok(px);
    }
    Ok(px.iter().flat_map(|&v| [v, v, v]).collect())
}

/// Loads the indexed records as an image tensor [B, H, W, 3] and a label
/// tensor [B] with 1 = real, 0 = fake.
pub fn load_batch(
    manifest: &Manifest,
    root: impl AsRef<Path>,
    indices: &[usize],
    out_size: (usize, usize),
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    if indices.is_empty() {
        return Err(Error::EmptyInput {
            what: "batch indices".to_string(),
        });
    }
    let (out_h, out_w) = check_out_size(out_size)?;
    let root = root.as_ref();
    let records = manifest.records();
    let mut data = Vec::with_capacity(indices.len() * out_h * out_w * 3);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let record = records.get(i).ok_or_else(|| Error::InvalidArg {
            op: "load_batch",
            detail: format!("index {i} out of range for {} records", records.len()),
        })?;
        data.extend(load_pixels(&root.join(&record.crop_path), out_size)?);
        labels.push(if record.label == Label::Real { 1.0 } else { 0.0 });
    }
    let images = Tensor::new(&[indices.len(), out_h, out_w, 3], data)?;
    let labels = Tensor::new(&[indices.len()], labels)?;
    Ok((images, labels))
}

/// Decodes every record of the manifest into an in-memory dataset.
pub fn load_dataset(
    manifest: &Manifest,
    root: impl AsRef<Path>,
    out_size: (usize, usize),
) -> Result<Dataset> {
    let (out_h, out_w) = check_out_size(out_size)?;
    let root = root.as_ref();
    let mut data = Vec::with_capacity(manifest.len() * out_h * out_w * 3);
    let mut labels = Vec::with_capacity(manifest.len());
    for record in manifest.records() {
        data.extend(load_pixels(&root.join(&record.crop_path), out_size)?);
        labels.push((record.label == Label::Real) as u8);
    }
    Dataset::new((out_h, out_w, 3), data, labels)
}

fn check_out_size(out_size: (usize, usize)) -> Result<(usize, usize)> {
    let (h, w) = out_size;
    if h == 0 || w == 0 {
        return Err(Error::InvalidArg {
            op: "load",
            detail: format!("out_size {h}x{w}"),
        });
    }
    Ok((h, w))
}
