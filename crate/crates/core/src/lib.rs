//! Randomized sketching with data-conditional inference for sketched least
//! squares and PCA.
//!
//! A sketch `S` compresses an `n x p` problem to `m x p`. The [`ls`] and
//! [`pca`] modules turn one sketch into point estimates plus confidence
//! intervals for the full-data quantities, using per-family variance
//! constants. [`harness`] checks those constants by simulation.

pub mod datagen;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod ls;
pub mod pca;
pub mod rng;
pub mod sketch;
pub mod stats;

pub use error::{Error, ErrorClass, Result};
pub use linalg::{DataMatrix, EigenDecomposition, ThinSvd};
pub use sketch::{Family, HaarMode, IidDist, SketchOutput, SketchSpec};
