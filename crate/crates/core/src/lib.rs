//! Frequentist model averaging for linear and logistic regression.
//!
//! Candidate models share a set of always-included columns and choose a
//! subset of optional ones. Weights over the candidates minimize a plug-in
//! estimate of the mean squared error of a scalar functional, or follow
//! smoothed AIC or equal weighting.

#![no_std]

extern crate alloc;

pub mod averaging;
pub mod error;
pub mod glm;
pub mod linalg;
pub mod model_space;
pub mod rng;
pub mod weights;

#[cfg(test)]
mod testutil;

pub use averaging::{
    average_estimate, fit_and_average_linear, fit_and_average_logistic, prediction_band,
    prediction_bands, AveragedEstimate, BandConfig, Functional, PredictionBand, Scheme,
};
pub use error::{Error, ModelLabel, Result};
pub use glm::FitResult;
pub use linalg::Matrix;
pub use model_space::{CandidateModel, ModelSet};
pub use weights::{aic_weights, equal_weights, solve_simplex_qp, QuadraticForm, WeightSolution};
