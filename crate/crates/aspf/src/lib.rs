//! Minimal deep-learning stack for RGB face anti-spoofing.
//!
//! The crate provides a tape-based autodiff core over dense NHWC tensors,
//! two compact convolutional classifiers (a width-contracted inverted-residual
//! net and a slightly larger desk-scale variant), RAdam training with
//! binary cross entropy, a frame-extraction and person-disjoint split
//! pipeline, gradient-based attention maps, and an int8 archive format.

pub mod archive;
pub mod data;
pub mod error;
pub mod explain;
pub mod img;
pub mod model;
pub mod ops;
pub mod quant;
pub mod tape;
pub mod train;
pub mod tensor;

pub use error::{Error, Result};
pub use ops::{Activation, NormMode, Padding};
pub use tape::{Tape, Var};
pub use tensor::{Elem, Tensor};
