//! Detection, quantification and localization of structural nonlinearity from
//! the statistics of input gradients of one-step-ahead neural network models.
//!
//! The crate is organised bottom-up:
//!
//! - [`simulator`]: synthetic shear-building acceleration records with an
//!   optional bumper (contact) or cubic nonlinearity.
//! - [`dataset`]: lagged one-step-ahead datasets, repetition-block splits and
//!   normalization.
//! - [`neuralnet`]: one-hidden-layer tanh network, backpropagation, training,
//!   recalibration and NMSE.
//! - [`gradients`]: analytic and finite-difference input gradients.
//! - [`gradstats`]: moments, Silverman KDE and the mean-moment metrics.
//! - [`pipeline`]: experiment configuration, orchestration, manifests and the
//!   command implementations behind the `nlgrad` binary.

pub mod dataset;
pub mod error;
pub mod gradients;
pub mod gradstats;
pub mod neuralnet;
pub mod pipeline;
pub mod simulator;

pub use error::{Error, Result};
