//! Binary PPM (P6) and PGM (P5) images, max value 255, plus corner-aligned
//! bilinear resampling shared by the crop pipeline and the heatmap overlay.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved row-major 8-bit image, 3 channels (RGB) or 1 (gray).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::InvalidArg {
                op: "Image::new",
                detail: format!("bad dimensions {width}x{height}x{channels}"),
            });
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidArg {
                op: "Image::new",
                detail: format!(
                    "payload {} bytes, dimensions need {}",
                    data.len(),
                    width * height * channels
                ),
            });
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Decode a binary PPM/PGM file. Only maxval 255 is accepted.
    pub fn read(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |detail: String| Error::ImageFormat {
            path: path.to_path_buf(),
            detail,
        };
        if bytes.len() < 2 {
            return Err(bad("file shorter than a magic number".into()));
        }
        let channels = match &bytes[..2] {
            b"P6" => 3,
            b"P5" => 1,
            m => return Err(bad(format!("magic {:?}, want P6 or P5", String::from_utf8_lossy(m)))),
        };
        let mut pos = 2;
        let mut fields = [0usize; 3];
        for field in fields.iter_mut() {
            // skip whitespace and `#` comments between header fields
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while pos < bytes.len() && bytes[pos] != b'\n' {
                            pos += 1;
                        }
                    }
                    Some(_) => break,
                    None => return Err(bad("header ended early".into())),
                }
            }
            let start = pos;
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            if start == pos {
                return Err(bad(format!("expected integer at byte {start}")));
            }
            let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are utf8");
            *field = text
                .parse()
                .map_err(|_| bad(format!("header field `{text}` out of range")))?;
        }
        let [width, height, maxval] = fields;
        if maxval != 255 {
            return Err(bad(format!("maxval {maxval}, only 255 supported")));
        }
        if width == 0 || height == 0 {
            return Err(bad(format!("degenerate size {width}x{height}")));
        }
        // exactly one whitespace byte separates the header from the payload
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            _ => return Err(bad("missing whitespace before payload".into())),
        }
        let need = width * height * channels;
        let payload = &bytes[pos..];
        if payload.len() < need {
            return Err(bad(format!(
                "payload {} bytes, need {need}",
                payload.len()
            )));
        }
        Image::new(width, height, channels, payload[..need].to_vec())
    }

    /// Encode as binary PPM (3 channels) or PGM (1 channel).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Corner-aligned bilinear resample: output corners sample input corners
    /// exactly; interior samples sit at src = dst·(in−1)/(out−1).
    pub fn resize_bilinear(&self, out_w: usize, out_h: usize) -> Result<Image> {
        if out_w == 0 || out_h == 0 {
            return Err(Error::InvalidArg {
                op: "resize_bilinear",
                detail: format!("target {out_w}x{out_h}"),
            });
        }
        let xs = axis_taps(self.width, out_w);
        let ys = axis_taps(self.height, out_h);
        let c = self.channels;
        let mut data = vec![0u8; out_w * out_h * c];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                for ci in 0..c {
                    let at = |y: usize, x: usize| self.data[(y * self.width + x) * c + ci] as f64;
                    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                    let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                    let v = top * (1.0 - fy) + bot * fy;
                    data[(oy * out_w + ox) * c + ci] = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        Image::new(out_w, out_h, c, data)
    }

    /// Pixel values scaled to [0, 1].
    pub fn unit_pixels(&self) -> Vec<f32> {
        self.data.iter().map(|&b| b as f32 / 255.0).collect()
    }
}

/// (left index, right index, right weight) per output position, corner-aligned.
fn axis_taps(in_dim: usize, out_dim: usize) -> Vec<(usize, usize, f64)> {
    (0..out_dim)
        .map(|o| {
            if out_dim == 1 || in_dim == 1 {
                return (0, 0, 0.0);
            }
            let src = o as f64 * (in_dim - 1) as f64 / (out_dim - 1) as f64;
            let i0 = (src.floor() as usize).min(in_dim - 1);
            let i1 = (i0 + 1).min(in_dim - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Corner-aligned bilinear resample of one float plane (heatmap upsampling).
pub fn resize_plane(src: &[f32], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f32> {
    let xs = axis_taps(w, out_w);
    let ys = axis_taps(h, out_h);
    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let at = |y: usize, x: usize| src[y * w + x] as f64;
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
            let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
            out.push((top * (1.0 - fy) + bot * fy) as f32);
        }
    }
    out
}
