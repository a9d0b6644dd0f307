//! Likelihood-free Bayesian inference with conditional generative networks
//! trained by scoring rule minimization.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`], [`autodiff`]: dense `f64` tensors and a define-by-run
//!   reverse-mode tape.
//! - [`nn`]: multilayer perceptrons, conditional generators and critics.
//! - [`scoring`]: energy, kernel and patched scoring rule estimators plus
//!   exact oracles for discrete distributions.
//! - [`training`]: Adam, minibatch scoring-rule training and an adversarial
//!   (GAN) baseline.
//! - [`simulators`]: benchmark models, dataset generation and container I/O,
//!   and reference posterior samplers.
//! - [`metrics`]: accuracy and calibration diagnostics (NRMSE, R^2,
//!   calibration error, simulation-based calibration, classifier two-sample
//!   test).
//! - [`sequential`]: non-amortized multi-round training with
//!   importance-weighted losses.

#![forbid(unsafe_code)]

pub mod autodiff;
pub mod classifier;
pub mod metrics;
pub mod nn;
pub mod scoring;
pub mod seeds;
pub mod sequential;
pub mod simulators;
pub mod tensor;
pub mod training;
