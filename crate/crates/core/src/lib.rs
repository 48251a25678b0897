//! Self-supervised secondary-landmark learning from multiview geometry.
//!
//! The crate learns to detect fine-grained *secondary* landmarks (elbows,
//! ears, spine points) given a detector for coarse *primary* landmarks and
//! unlabeled synchronized multiview footage. The pieces:
//!
//! - [`tensor`] — reverse-mode autodiff over dense f64 arrays.
//! - [`geometry`] — pinhole cameras, DLT triangulation, pose normalization.
//! - [`subspace`] — PCA joint space over primary+secondary pose vectors and
//!   masked secondary reconstruction.
//! - [`detector`] / [`predictor`] — the 2-D heatmap detector and the 3-D
//!   secondary-from-primary predictor.
//! - [`losses`] — labeled loss, multiview reprojection + contrastive loss.
//! - [`trainer`] — two-phase semi-supervised optimization and ablations.
//! - [`baselines`] — ALS / BALS matrix completion and VAE imputation.
//! - [`synthdata`] — articulated-skeleton multiview capture simulator.
//! - [`eval`] — PCKh metrics, correlation statistics, report tables.
//!
//! The `landmarker` binary drives the full workflow; see the README.

pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod detector;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod losses;
pub mod optim;
pub mod predictor;
pub mod subspace;
pub mod synthdata;
pub mod tensor;
pub mod trainer;
pub mod util;

pub use error::{CoreError, Result};
