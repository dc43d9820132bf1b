//! Shared oracles and the finite-difference harness used by the op tests
//! and the acceptance suite.
//!
//! The reference implementations here are written straight from the textbook
//! definitions with their own index arithmetic. They intentionally share the
//! forward code's summation order (bias first, then taps in kh, kw, cin
//! nesting order) so 64-bit comparisons can demand exact equality.

#![allow(dead_code)]

use aspf::archive::{ArchiveHeader, Dtype};
use aspf::model::{presets, Model};
use aspf::train::{train, Dataset, TrainConfig};
use aspf::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force NHWC convolution. `pad` is (top, left); bottom/right padding
/// is implied by the output size. Out-of-range taps are skipped.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_oracle(
    x: &[f64],
    xs: (usize, usize, usize, usize),
    k: &[f64],
    ks: (usize, usize, usize, usize),
    bias: Option<&[f64]>,
    stride: usize,
    pad: (usize, usize),
    out_hw: (usize, usize),
) -> Vec<f64> {
    let (n, h, w, cin) = xs;
    let (kh, kw, _, cout) = ks;
    let (oh, ow) = out_hw;
    let mut out = Vec::with_capacity(n * oh * ow * cout);
    for ni in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = bias.map_or(0.0, |b| b[co]);
                    for ky in 0..kh {
                        for kx in 0..kw {
                            for ci in 0..cin {
                                let iy = (oy * stride + ky) as i64 - pad.0 as i64;
                                let ix = (ox * stride + kx) as i64 - pad.1 as i64;
                                if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                    continue;
                                }
                                let xi = ((ni * h + iy as usize) * w + ix as usize) * cin + ci;
                                let kidx = ((ky * kw + kx) * cin + ci) * cout + co;
                                acc += x[xi] * k[kidx];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// Brute-force depthwise convolution, one kernel slice per channel.
#[allow(clippy::too_many_arguments)]
pub fn depthwise_oracle(
    x: &[f64],
    xs: (usize, usize, usize, usize),
    k: &[f64],
    ks: (usize, usize),
    stride: usize,
    pad: (usize, usize),
    out_hw: (usize, usize),
) -> Vec<f64> {
    let (n, h, w, c) = xs;
    let (kh, kw) = ks;
    let (oh, ow) = out_hw;
    let mut out = Vec::with_capacity(n * oh * ow * c);
    for ni in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ci in 0..c {
                    let mut acc = 0.0;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as i64 - pad.0 as i64;
                            let ix = (ox * stride + kx) as i64 - pad.1 as i64;
                            if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                continue;
                            }
                            let xi = ((ni * h + iy as usize) * w + ix as usize) * c + ci;
                            acc += x[xi] * k[(ky * kw + kx) * c + ci];
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// Triple-loop matrix product with bias, accumulated bias-first.
pub fn dense_oracle(x: &[f64], n: usize, fin: usize, w: &[f64], fout: usize, b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * fout);
    for ni in 0..n {
        for fo in 0..fout {
            let mut acc = b[fo];
            for fi in 0..fin {
                acc += x[ni * fin + fi] * w[fi * fout + fo];
            }
            out.push(acc);
        }
    }
    out
}

/// Elementwise-loop weighted BCE mean with the same clamp band.
pub fn bce_oracle(pred: &[f64], target: &[f64], weights: Option<&[f64]>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..pred.len() {
        let p = pred[i].clamp(1e-7, 1.0 - 1e-7);
        let w = weights.map_or(1.0, |ws| ws[i]);
        num += w * -(target[i] * p.ln() + (1.0 - target[i]) * (1.0 - p).ln());
        den += w;
    }
    num / den
}

/// Uniform random data in [lo, hi) for each shape, drawn in leaf order.
pub fn random_leaves(seed: u64, shapes: &[&[usize]], lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            (0..n).map(|_| rng.gen_range(lo..hi)).collect()
        })
        .collect()
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-6;

/// Graph builder given a tape, leaf handles, and the per-run seed.
pub type BuildFn<'a> = dyn Fn(&mut Tape<f64>, &[Var], u64) -> Var + 'a;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / f64::max(1.0, f64::max(a.abs(), b.abs()))
}

fn forward_scalar(
    build: &BuildFn<'_>,
    seed: u64,
    shapes: &[&[usize]],
    datas: &[Vec<f64>],
) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = shapes
        .iter()
        .zip(datas.iter())
        .map(|(s, d)| tape.leaf(Tensor::new(s, d.clone()).unwrap(), false))
        .collect();
    let y = build(&mut tape, &vars, seed);
    let loss = tape.sum_all(y).unwrap();
    tape.value(loss).data()[0]
}

/// Checks d(sum(op(...)))/d(every leaf element) against central finite
/// differences. `build` gets the per-run seed so ops that sample (dropconnect)
/// can stay deterministic across the perturbed re-evaluations.
pub fn gradcheck_sum(
    name: &str,
    seeds: std::ops::Range<u64>,
    shapes: &[&[usize]],
    lo: f64,
    hi: f64,
    build: &BuildFn<'_>,
) {
    for seed in seeds {
        let datas = random_leaves(seed, shapes, lo, hi);
        let mut tape = Tape::new();
        let vars: Vec<Var> = shapes
            .iter()
            .zip(datas.iter())
            .map(|(s, d)| tape.leaf(Tensor::new(s, d.clone()).unwrap(), true))
            .collect();
        let y = build(&mut tape, &vars, seed);
        let loss = tape.sum_all(y).unwrap();
        tape.backward(loss).unwrap();
        let analytic: Vec<Vec<f64>> = vars
            .iter()
            .map(|&v| tape.grad(v).expect("tracked leaf has gradient").to_vec())
            .collect();

        for li in 0..shapes.len() {
            for e in 0..datas[li].len() {
                let mut plus = datas.clone();
                plus[li][e] += FD_STEP;
                let mut minus = datas.clone();
                minus[li][e] -= FD_STEP;
                let fd = (forward_scalar(build, seed, shapes, &plus)
                    - forward_scalar(build, seed, shapes, &minus))
                    / (2.0 * FD_STEP);
                let got = analytic[li][e];
                assert!(
                    rel_err(fd, got) < FD_TOL,
                    "{name}: seed {seed} leaf {li} elem {e}: analytic {got} vs fd {fd}"
                );
            }
        }
    }
}

/// Full-Jacobian variant for ops whose output sum has a degenerate gradient
/// (softmax rows sum to a constant; normalizers kill uniform shifts).
pub fn gradcheck_jacobian(
    name: &str,
    seeds: std::ops::Range<u64>,
    shapes: &[&[usize]],
    lo: f64,
    hi: f64,
    build: &BuildFn<'_>,
) {
    for seed in seeds {
        let datas = random_leaves(seed, shapes, lo, hi);
        let forward_all = |ds: &[Vec<f64>]| -> Vec<f64> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = shapes
                .iter()
                .zip(ds.iter())
                .map(|(s, d)| tape.leaf(Tensor::new(s, d.clone()).unwrap(), false))
                .collect();
            let y = build(&mut tape, &vars, seed);
            tape.value(y).data().to_vec()
        };
        let out_len = forward_all(&datas).len();

        // analytic rows: one backward per output element
        let mut analytic = Vec::with_capacity(out_len);
        for k in 0..out_len {
            let mut tape = Tape::new();
            let vars: Vec<Var> = shapes
                .iter()
                .zip(datas.iter())
                .map(|(s, d)| tape.leaf(Tensor::new(s, d.clone()).unwrap(), true))
                .collect();
            let y = build(&mut tape, &vars, seed);
            let yk = tape.pick_scalar(y, k).unwrap();
            tape.backward(yk).unwrap();
            let row: Vec<Vec<f64>> = vars
                .iter()
                .map(|&v| tape.grad(v).expect("tracked leaf has gradient").to_vec())
                .collect();
            analytic.push(row);
        }

        // finite-difference columns: one pair of forwards per input element
        for li in 0..shapes.len() {
            for e in 0..datas[li].len() {
                let mut plus = datas.clone();
                plus[li][e] += FD_STEP;
                let mut minus = datas.clone();
                minus[li][e] -= FD_STEP;
                let yp = forward_all(&plus);
                let ym = forward_all(&minus);
                for k in 0..out_len {
                    let fd = (yp[k] - ym[k]) / (2.0 * FD_STEP);
                    let got = analytic[k][li][e];
                    assert!(
                        rel_err(fd, got) < FD_TOL,
                        "{name}: seed {seed} out {k} leaf {li} elem {e}: \
                         analytic {got} vs fd {fd}"
                    );
                }
            }
        }
    }
}

/// Deterministic pseudo-random vector for oracle comparisons.
pub fn rand_vec(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// (output extent, leading pad) for one spatial dimension:
/// `valid` keeps only fully covered windows, `same` targets ceil(in/stride)
/// with the odd pad pixel trailing.
pub fn oracle_geometry(in_dim: usize, k: usize, stride: usize, same: bool) -> (usize, usize) {
    if same {
        let out = in_dim.div_ceil(stride);
        let total = ((out - 1) * stride + k).saturating_sub(in_dim);
        (out, total / 2)
    } else {
        ((in_dim - k) / stride + 1, 0)
    }
}

/// Synthetic two-class image set: even samples are "real" (high-frequency
/// checkerboard), odd samples are "fake" (flat color). Both carry a little
/// noise so no two images repeat. Values in [0,1], labels 1 = real.
pub fn textured_flat_set(
    n: usize,
    shape: (usize, usize, usize),
    seed: u64,
) -> (Vec<f32>, Vec<u8>) {
    let (h, w, c) = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * h * w * c);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let real = i % 2 == 0;
        labels.push(real as u8);
        let base: Vec<f64> = (0..c).map(|_| rng.gen_range(0.25..0.75)).collect();
        let phase: usize = rng.gen_range(0..2);
        for y in 0..h {
            for x in 0..w {
                let checker = ((x / 2 + y / 2 + phase) % 2) as f64;
                for ch in &base {
                    let noise = rng.gen_range(-0.05..0.05);
                    let v = if real {
                        0.5 + (checker - 0.5) * 0.8 + noise
                    } else {
                        ch + noise
                    };
                    data.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
    }
    (data, labels)
}

/// Tiny preset fitted to a small textured-vs-flat set. Shared by the archive
/// and acceptance suites so quantization parity runs on trained weights
/// rather than fresh initialization.
pub fn trained_tiny_model() -> Model {
    let spec = presets::light_tiny();
    let (h, w, c) = spec.input_shape;
    let (data, labels) = textured_flat_set(64, (h, w, c), 5);
    let train_set = Dataset::new((h, w, c), data, labels).unwrap();
    let (vdata, vlabels) = textured_flat_set(16, (h, w, c), 6);
    let val_set = Dataset::new((h, w, c), vdata, vlabels).unwrap();
    let mut model = Model::build(&spec, 7).unwrap();
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 8,
        learning_rate: 2e-2,
        seed: 11,
        ..TrainConfig::default()
    };
    train(&mut model, &train_set, &val_set, &cfg).unwrap();
    model
}

/// Rewrites the JSON header of a valid archive through the real serializer,
/// keeping magic, version, and payload intact.
fn reheadered(
    original: &[u8],
    edit: impl FnOnce(&mut ArchiveHeader),
    what: &str,
) -> (String, Vec<u8>) {
    let header_len = u64::from_le_bytes(original[8..16].try_into().unwrap()) as usize;
    let mut header: ArchiveHeader =
        serde_json::from_slice(&original[16..16 + header_len]).unwrap();
    edit(&mut header);
    let json = serde_json::to_string(&header).unwrap();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&original[..8]);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(json.as_bytes());
    bytes.extend_from_slice(&original[16 + header_len..]);
    (what.to_string(), bytes)
}

/// Corruptions of a valid archive, each paired with a description. Every
/// entry is structurally wrong, so loading must fail with a named error.
pub fn archive_mutations(original: &[u8]) -> Vec<(String, Vec<u8>)> {
    let mut corpus = Vec::new();
    let len = original.len();

    // truncations at 40 points spread over the file, including cuts inside
    // the fixed header, the JSON, and the payload
    for i in 1..=40 {
        let cut = len * i / 41;
        corpus.push((format!("truncated to {cut} bytes"), original[..cut].to_vec()));
    }

    // magic damage
    for i in 0..4 {
        let mut bytes = original.to_vec();
        bytes[i] = b'X';
        corpus.push((format!("magic byte {i} overwritten"), bytes));
    }

    // unsupported versions
    for v in [0u32, 2, 255, u32::MAX] {
        let mut bytes = original.to_vec();
        bytes[4..8].copy_from_slice(&v.to_le_bytes());
        corpus.push((format!("version {v}"), bytes));
    }

    // header length lies
    for hl in [0u64, 1, u64::MAX, len as u64] {
        let mut bytes = original.to_vec();
        bytes[8..16].copy_from_slice(&hl.to_le_bytes());
        corpus.push((format!("header length {hl}"), bytes));
    }

    // JSON no longer parses
    let mut broken_open = original.to_vec();
    broken_open[16] = b'X';
    corpus.push(("header opening brace destroyed".into(), broken_open));
    let header_len = u64::from_le_bytes(original[8..16].try_into().unwrap()) as usize;
    let mut broken_close = original.to_vec();
    broken_close[16 + header_len - 1] = b'X';
    corpus.push(("header closing brace destroyed".into(), broken_close));

    // table inconsistencies rebuilt through the real serializer
    corpus.push(reheadered(original, |h| h.tensors[0].offset += 1, "first tensor shifted into the second"));
    corpus.push(reheadered(original, |h| h.tensors[0].shape[0] += 1, "shape no longer multiplies to byte_len"));
    corpus.push(reheadered(original, |h| h.tensors[0].byte_len += 4, "byte_len stretched"));
    corpus.push(reheadered(original, |h| h.tensors[0].shape = vec![0, 3], "zero extent in shape"));
    corpus.push(reheadered(original, |h| h.tensors[0].shape = vec![usize::MAX, usize::MAX], "shape product overflows"));
    corpus.push(reheadered(original, |h| h.tensors[0].offset = u64::MAX, "offset overflows the payload"));
    corpus.push(reheadered(original, |h| h.tensors[0].name = "no.such.tensor".into(), "unknown tensor name"));
    corpus.push(reheadered(original, |h| {
        h.tensors[1].name = h.tensors[0].name.clone();
    }, "same tensor listed twice"));
    corpus.push(reheadered(original, |h| { h.tensors.pop(); }, "last tensor missing"));
    corpus.push(reheadered(original, |h| h.tensors[0].scale = Some(0.1), "scale on an f32 tensor"));
    corpus.push(reheadered(original, |h| {
        h.tensors[0].dtype = Dtype::I8;
    }, "dtype flipped to i8 without scale"));
    corpus.push(reheadered(original, |h| h.spec.alpha = -1.0, "embedded spec made invalid"));

    corpus
}

/// Damaged copies of a valid JSONL manifest, each paired with a description.
/// Every entry violates the record contract, so reading must fail with a
/// named error.
pub fn manifest_mutations(valid: &str) -> Vec<(String, String)> {
    fn edit_first(valid: &str, f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut lines: Vec<String> = valid.lines().map(str::to_string).collect();
        let mut v: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
        f(&mut v);
        lines[0] = serde_json::to_string(&v).unwrap();
        lines.join("\n")
    }
    let valid = valid.trim_end();
    let lines: Vec<String> = valid.lines().map(str::to_string).collect();
    assert!(lines.len() >= 2, "need at least two records to mutate");

    let mut corpus: Vec<(String, String)> = Vec::new();
    let mut push = |what: &str, text: String| corpus.push((what.to_string(), text));

    // line-level damage
    let mut cut = lines.clone();
    let keep = cut[0].len() / 2;
    cut[0].truncate(keep);
    push("first record cut mid-JSON", cut.join("\n"));
    push("garbage line at the top", format!("not json\n{valid}"));
    let mut blank = lines.clone();
    blank.insert(1, String::new());
    push("blank line between records", blank.join("\n"));
    push("array where an object belongs", format!("[1,2,3]\n{valid}"));
    push("bare number line", format!("17\n{valid}"));
    let mut trailing = lines.clone();
    trailing[0].push_str(" trailing");
    push("text after the closing brace", trailing.join("\n"));
    push("record duplicated verbatim", format!("{valid}\n{}", lines[0]));

    // field-level damage, rebuilt through the JSON serializer
    push("unknown field", edit_first(valid, |v| v["flavor"] = 1.into()));
    push("label field missing", edit_first(valid, |v| {
        v.as_object_mut().unwrap().remove("label");
    }));
    push("source_video field missing", edit_first(valid, |v| {
        v.as_object_mut().unwrap().remove("source_video");
    }));
    push("label misspelled", edit_first(valid, |v| v["label"] = "reel".into()));
    push("label as a number", edit_first(valid, |v| v["label"] = 1.into()));
    push("unknown attack type", edit_first(valid, |v| v["attack_type"] = "deepfake".into()));
    push("attack type null", edit_first(valid, |v| v["attack_type"] = serde_json::Value::Null));
    push("subject zero", edit_first(valid, |v| v["subject_id"] = 0.into()));
    push("subject negative", edit_first(valid, |v| v["subject_id"] = (-3).into()));
    push("subject as a string", edit_first(valid, |v| v["subject_id"] = "three".into()));
    push("frame index negative", edit_first(valid, |v| v["frame_index"] = (-1).into()));
    push("frame index fractional", edit_first(valid, |v| v["frame_index"] = 1.5.into()));
    push("crop path as an array", edit_first(valid, |v| v["crop_path"] = serde_json::json!([1, 2])));
    push("real label on a replay attack", edit_first(valid, |v| {
        v["label"] = "real".into();
        v["attack_type"] = "replay".into();
    }));
    push("fake label on a genuine capture", edit_first(valid, |v| {
        v["label"] = "fake".into();
        v["attack_type"] = "genuine".into();
    }));

    corpus
}
