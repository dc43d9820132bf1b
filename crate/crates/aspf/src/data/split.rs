//! Person-disjoint test split plus seeded per-sample train/val split.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::manifest::Manifest;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Manifest,
    pub val: Manifest,
    pub test: Manifest,
}

/// Carves the manifest into train/val/test. Test is every record of the
/// holdout subjects, making it person-disjoint from the rest. The remainder
/// is shuffled by `seed` and split per sample: floor(train_fraction · R)
/// records train, the rest validate.
pub fn split_manifest(
    manifest: &Manifest,
    holdout_subjects: &BTreeSet<u32>,
    train_fraction: f64,
    seed: u64,
) -> Result<Split> {
    if holdout_subjects.is_empty() {
        return Err(Error::EmptyInput {
            what: "holdout subject set".to_string(),
        });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArg {
            op: "split_manifest",
            detail: format!("train_fraction {train_fraction} outside (0, 1)"),
        });
    }
    let present = manifest.subjects();
    for &subject in holdout_subjects {
        if !present.contains(&subject) {
            return Err(Error::MissingSubject { subject });
        }
    }
    let (test, rest): (Vec<_>, Vec<_>) = manifest
        .records()
        .iter()
        .cloned()
        .partition(|r| holdout_subjects.contains(&r.subject_id));
    if rest.is_empty() {
        return Err(Error::Data {
            detail: "holdout covers every subject; nothing left to train on".to_string(),
        });
    }
    let mut rest = rest;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    let n_train = (train_fraction * rest.len() as f64).floor() as usize;
    let val = rest.split_off(n_train);
    Ok(Split {
        train: Manifest::from_records(rest)?,
        val: Manifest::from_records(val)?,
        test: Manifest::from_records(test)?,
    })
}
