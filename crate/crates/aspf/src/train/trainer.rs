//! The train and evaluate loops.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{HeadKind, Model};
use crate::tape::Tape;
use crate::tensor::Tensor;

use super::metrics::compute_metrics;
use super::optim::RAdam;
use super::TrainConfig;

/// Running statistics blend one batch at this momentum per step.
const NORM_MOMENTUM: f32 = 0.99;

/// Inference batch size; results are batch-size invariant, this only caps
/// peak memory.
const EVAL_BATCH: usize = 64;

/// An in-memory labeled split: `n` images of one shape, values in [0,1],
/// labels 1 = real, 0 = fake.
pub struct Dataset {
    shape: (usize, usize, usize),
    data: Vec<f32>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(shape: (usize, usize, usize), data: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        let (h, w, c) = shape;
        let pixel = h * w * c;
        if pixel == 0 {
            return Err(Error::InvalidArg {
                op: "Dataset::new",
                detail: format!("degenerate image shape {shape:?}"),
            });
        }
        if data.len() != labels.len() * pixel {
            return Err(Error::Shape {
                op: "Dataset::new",
                detail: format!(
                    "{} values is not {} samples of {} each",
                    data.len(),
                    labels.len(),
                    pixel
                ),
            });
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidArg {
                op: "Dataset::new",
                detail: "labels must be 0 (fake) or 1 (real)".into(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "Dataset::new input values".into(),
            });
        }
        Ok(Dataset { shape, data, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Assemble the samples at `indices` into one batch tensor plus float
    /// targets.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<f32>, Vec<f32>) {
        let (h, w, c) = self.shape;
        let pixel = h * w * c;
        let mut data = Vec::with_capacity(indices.len() * pixel);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.data[i * pixel..(i + 1) * pixel]);
            targets.push(self.labels[i] as f32);
        }
        let tensor = Tensor::new(&[indices.len(), h, w, c], data)
            .expect("gather shape is consistent by construction");
        (tensor, targets)
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_f1: f64,
    pub val_f1: f64,
}

/// What a finished run returns. The model itself is left holding the
/// weights of `best_epoch` (highest validation F1, earliest on ties).
#[derive(Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    pub best_val_f1: f64,
}

fn check_input_shape(model: &Model, set: &Dataset, what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::EmptyInput {
            what: format!("{what} split"),
        });
    }
    if set.shape() != model.spec().input_shape {
        return Err(Error::Shape {
            op: "train",
            detail: format!(
                "{what} split images are {:?} but the model expects {:?}",
                set.shape(),
                model.spec().input_shape
            ),
        });
    }
    Ok(())
}

fn label_weights(targets: &[f32], class_weights: Option<[f64; 2]>) -> Option<Vec<f32>> {
    class_weights.map(|w| targets.iter().map(|&y| w[y as usize] as f32).collect())
}

/// Hard label from the probability of "real". The sigmoid head compares
/// against the threshold; the softmax head is an argmax, i.e. fixed 0.5.
fn decide(prob_real: f32, kind: HeadKind, threshold: f32) -> u8 {
    let real = match kind {
        HeadKind::Sigmoid1 => prob_real >= threshold,
        HeadKind::Softmax2 => prob_real > 0.5,
    };
    real as u8
}

/// Run the model in inference mode over the whole set. Returns the per-sample
/// probability of "real" and the (optionally class-weighted) mean BCE loss
/// against the true labels.
fn infer_pass(
    model: &Model,
    set: &Dataset,
    class_weights: Option<[f64; 2]>,
) -> Result<(Vec<f32>, f64)> {
    let kind = model.head_kind();
    let indices: Vec<usize> = (0..set.len()).collect();
    let mut probs = Vec::with_capacity(set.len());
    let mut loss_num = 0.0f64;
    let mut weight_den = 0.0f64;
    for chunk in indices.chunks(EVAL_BATCH) {
        let (batch, targets) = set.gather(chunk);
        let mut tape: Tape<f32> = Tape::new();
        let fwd = model.forward_infer(&mut tape, batch)?;
        let prob = match kind {
            HeadKind::Sigmoid1 => fwd.output,
            HeadKind::Softmax2 => tape.pick_column(fwd.output, 1)?,
        };
        let weights = label_weights(&targets, class_weights);
        let loss = tape.bce_loss(prob, &targets, weights.as_deref())?;
        let wsum: f64 = weights
            .as_ref()
            .map(|w| w.iter().map(|&x| x as f64).sum())
            .unwrap_or(targets.len() as f64);
        loss_num += tape.value(loss).data()[0] as f64 * wsum;
        weight_den += wsum;
        probs.extend_from_slice(tape.value(prob).data());
    }
    Ok((probs, loss_num / weight_den))
}

/// Optimize `model` on `train_set`, tracking `val_set` each epoch. Fully
/// deterministic for a given config seed: shuffling and dropconnect masks
/// come from one seeded stream. On return the model holds the weights and
/// running statistics of the best-validation-F1 epoch.
pub fn train(
    model: &mut Model,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_input_shape(model, train_set, "train")?;
    check_input_shape(model, val_set, "validation")?;
    model.set_dropconnect_rate(cfg.dropconnect_rate)?;

    let kind = model.head_kind();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optim: RAdam<f32> = RAdam::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
        .map_err(|e| Error::Config {
            detail: e.to_string(),
        })?;

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, crate::model::Snapshot)> = None;
    let mut indices: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut rng);
        let mut loss_num = 0.0f64;
        let mut weight_den = 0.0f64;
        let mut pred_labels = Vec::with_capacity(train_set.len());
        let mut true_labels = Vec::with_capacity(train_set.len());

        for (batch_idx, chunk) in indices.chunks(cfg.batch_size).enumerate() {
            let (batch, targets) = train_set.gather(chunk);
            let mut tape: Tape<f32> = Tape::new();
            let step = (|| -> Result<(f64, f64, Vec<f32>)> {
                let fwd = model.forward_train(&mut tape, batch, &mut rng)?;
                let prob = match kind {
                    HeadKind::Sigmoid1 => fwd.output,
                    HeadKind::Softmax2 => tape.pick_column(fwd.output, 1)?,
                };
                let weights = label_weights(&targets, cfg.class_weights);
                let loss = tape.bce_loss(prob, &targets, weights.as_deref())?;
                tape.backward(loss)?;
                let probs = tape.value(prob).data().to_vec();
                let loss_value = tape.value(loss).data()[0] as f64;
                let wsum: f64 = weights
                    .as_ref()
                    .map(|w| w.iter().map(|&x| x as f64).sum())
                    .unwrap_or(targets.len() as f64);

                let grads: Vec<Tensor<f32>> = fwd
                    .param_vars
                    .iter()
                    .map(|&v| {
                        tape.take_grad(v)
                            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
                    })
                    .collect();
                let grad_refs: Vec<&[f32]> = grads.iter().map(|g| g.data()).collect();
                let mut param_refs: Vec<(&str, &mut [f32])> = model
                    .params_mut()
                    .iter_mut()
                    .map(|p| (p.name.as_str(), p.tensor.data_mut()))
                    .collect();
                optim.step(&mut param_refs, &grad_refs)?;
                drop(param_refs);
                model.commit_norm_stats(&tape, &fwd, NORM_MOMENTUM)?;
                Ok((loss_value, wsum, probs))
            })();
            let (loss_value, wsum, probs) = step.map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFiniteLoss { epoch, batch: batch_idx },
                other => other,
            })?;

            loss_num += loss_value * wsum;
            weight_den += wsum;
            for (&p, &t) in probs.iter().zip(&targets) {
                pred_labels.push(decide(p, kind, 0.5));
                true_labels.push(t as u8);
            }
        }

        let train_f1 = compute_metrics(&pred_labels, &true_labels)?.f1;
        let (val_probs, val_loss) = infer_pass(model, val_set, cfg.class_weights)?;
        let val_preds: Vec<u8> = val_probs.iter().map(|&p| decide(p, kind, 0.5)).collect();
        let val_f1 = compute_metrics(&val_preds, val_set.labels())?.f1;

        history.push(EpochStats {
            epoch,
            train_loss: loss_num / weight_den,
            val_loss,
            train_f1,
            val_f1,
        });
        if best.as_ref().is_none_or(|(_, f1, _)| val_f1 > *f1) {
            best = Some((epoch, val_f1, model.snapshot()));
        }
    }

    match best {
        Some((epoch, f1, snapshot)) => {
            model.restore(&snapshot)?;
            Ok(TrainOutcome {
                history,
                best_epoch: Some(epoch),
                best_val_f1: f1,
            })
        }
        None => Ok(TrainOutcome {
            history,
            best_epoch: None,
            best_val_f1: 0.0,
        }),
    }
}

/// Score a split with the model as-is. `threshold` applies to the sigmoid
/// head; the softmax head always takes the argmax.
pub fn evaluate(model: &Model, set: &Dataset, threshold: f32) -> Result<super::MetricsReport> {
    if set.is_empty() {
        return Err(Error::EmptyInput {
            what: "evaluation split".into(),
        });
    }
    check_input_shape(model, set, "evaluation")?;
    if !threshold.is_finite() {
        return Err(Error::InvalidArg {
            op: "evaluate",
            detail: format!("threshold {threshold} must be finite"),
        });
    }
    let kind = model.head_kind();
    let (probs, _) = infer_pass(model, set, None)?;
    let preds: Vec<u8> = probs.iter().map(|&p| decide(p, kind, threshold)).collect();
    compute_metrics(&preds, set.labels())
}

/// Per-sample probability of "real", in set order. Batch-size invariant.
pub fn predict_probs(model: &Model, set: &Dataset) -> Result<Vec<f32>> {
    check_input_shape(model, set, "prediction")?;
    Ok(infer_pass(model, set, None)?.0)
}

/// Hard per-sample decisions (1 = real) at the given threshold.
pub fn predict(model: &Model, set: &Dataset, threshold: f32) -> Result<Vec<u8>> {
    if !threshold.is_finite() {
        return Err(Error::InvalidArg {
            op: "predict",
            detail: format!("threshold {threshold} must be finite"),
        });
    }
    let kind = model.head_kind();
    Ok(predict_probs(model, set)?
        .iter()
        .map(|&p| decide(p, kind, threshold))
        .collect())
}

/// Write the history in the fixed CSV layout.
pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut text = String::from("epoch,train_loss,val_loss,train_f1,val_f1\n");
    for row in history {
        writeln!(
            text,
            "{},{},{},{},{}",
            row.epoch, row.train_loss, row.val_loss, row.train_f1, row.val_f1
        )
        .expect("string writes cannot fail");
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
