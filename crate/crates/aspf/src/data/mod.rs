//! Data preparation: frame extraction, pluggable face cropping, manifests,
//! person-disjoint splits, and tensor loading.

mod detect;
mod frames;
mod load;
mod manifest;
mod split;

pub use detect::{
    detect_and_crop, prep_frames, write_rejection_csv, CropOutcome, CropPolicy, FaceBox,
    FaceDetector, PrepReport, Rejection, RejectReason, StubDetector,
};
pub use frames::{extract_frames, Frame};
pub use load::{load_batch, load_dataset, load_pixels};
pub use manifest::{build_manifest, AttackType, Label, Manifest, ManifestSummary, SampleRecord};
pub use split::{split_manifest, Split, DEFAULT_TRAIN_FRACTION};
