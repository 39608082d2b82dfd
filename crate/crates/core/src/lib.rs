//! Image classification from multi-view convolutional features.
//!
//! Each sample is split into R, G, B, grayscale and (optionally) depth
//! planes. A fixed, seeded C/S convolutional network turns every plane into
//! a feature vector; the vectors are spliced into one row per sample,
//! reduced with correlation-matrix PCA, and classified by one-vs-rest
//! linear SVMs.
//!
//! ```text
//! imageio ─► convnet ─► fusion ─► pca ─► svm
//!                    pipeline / cli
//! ```

pub mod cli;
pub mod convnet;
pub mod error;
pub mod fusion;
pub mod imageio;
pub mod pca;
pub mod pipeline;
pub mod svm;
pub mod synthetic;

pub use error::{Error, Result};
