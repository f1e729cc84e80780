//! Time-frequency explanations for time-series black-box classifiers.
//!
//! The crate turns a raw series into a short-time Fourier grid, perturbs that
//! grid against a realistic background baseline, and ranks the grid cells (or
//! time super-segments) by how much they move a classifier's output. Greedy
//! insertion/deletion explainers live alongside RISE, LIME, and KernelSHAP
//! baselines, with ranking-quality metrics and a reproducible experiment
//! runner on top.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod explainers;
pub mod metrics;
pub mod perturbation;
mod seed;
pub mod signal;

pub use error::{Error, Result};
