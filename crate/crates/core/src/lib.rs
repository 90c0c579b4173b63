//! Joint face detection and recognition with spatial-transformer alignment.

pub mod config;
pub mod data;
pub mod detection;
pub mod error;
pub mod gradcheck;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod recognition;
pub mod seed;
pub mod stn;
pub mod tensor;
pub mod training;

#[cfg(any(test, feature = "reference"))]
pub mod reference;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
