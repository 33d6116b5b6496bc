//! Information-plane estimation for variational information bottleneck
//! classifiers trained on data from a VAE teacher.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`], [`autodiff`], [`optim`], [`nn`]: a small dense `f64` engine
//!   with reverse-mode differentiation, SGD/Adam and MLPs.
//! * [`distributions`]: diagonal Gaussians, categoricals and pixel likelihoods.
//! * [`data`]: IDX ingestion, synthetic digits, zero-information and
//!   teacher-reconstructed datasets, discrete joints.
//! * [`teacher`]: the VAE that generates the data.
//! * [`student`]: the VIB classifier.
//! * [`mi`]: mutual-information estimators and bounds.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod distributions;
pub mod error;
pub mod fixtures;
pub mod gradcheck;
pub mod mi;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod student;
pub mod teacher;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
