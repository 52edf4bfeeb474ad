//! Per-model estimation: least squares, logistic maximum likelihood, and the
//! logistic pseudo-fit against a vector of target probabilities.
//!
//! The logistic MLE and the pseudo-fit share one Newton iteration. Both
//! maximize `Σ tᵢ ηᵢ − log(1 + e^{ηᵢ})` with `η = Xβ`; the MLE uses the 0/1
//! responses as targets, the pseudo-fit uses probabilities. The score of that
//! objective is `Xᵀ(t − p)`, so a pseudo-fit against the full-model fitted
//! probabilities solves `X_kᵀ(p̂_full − p_k) = 0`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ModelLabel, Result};
use crate::linalg::{dot, norm_inf, Matrix, Qr};
use crate::model_space::{augment, subset_columns, AugmentedVector, CandidateModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    /// Zero-filled full-length coefficients. Equal to `beta` until the fit is
    /// tied to a model with [`FitResult::for_model`].
    pub augmented: AugmentedVector,
    pub loglik: f64,
    pub dim: usize,
    pub converged: bool,
    pub iterations: usize,
    /// `‖X_kᵀ(t − p)‖_∞` at exit for logistic fits, the normal-equation
    /// residual for least squares.
    pub score_residual: f64,
}

impl FitResult {
    fn unplaced(beta: Vec<f64>, loglik: f64, converged: bool, iterations: usize, score_residual: f64) -> Self {
        FitResult {
            dim: beta.len(),
            augmented: AugmentedVector {
                values: beta.clone(),
                fill: 0.0,
            },
            beta,
            loglik,
            converged,
            iterations,
            score_residual,
        }
    }

    /// Re-expresses the augmented vector in the full coordinate system of `model`.
    pub fn for_model(mut self, model: &CandidateModel) -> Result<Self> {
        self.augmented = augment(&self.beta, model, 0.0)?;
        Ok(self)
    }

    /// `AIC = −2ℓ + 2·dim`.
    pub fn aic(&self) -> f64 {
        -2.0 * self.loglik + 2.0 * self.dim as f64
    }
}

fn check_rows(x: &Matrix, len: usize, context: &'static str) -> Result<()> {
    if x.nrows() != len {
        return Err(Error::DimensionMismatch {
            context,
            expected: x.nrows(),
            found: len,
        });
    }
    Ok(())
}

/// Gaussian log-likelihood at the MLE variance `rss / n`.
pub fn gaussian_loglik(rss: f64, n: usize) -> f64 {
    let n = n as f64;
    if rss <= 0.0 {
        return f64::INFINITY;
    }
    -0.5 * n * (libm::log(2.0 * core::f64::consts::PI * rss / n) + 1.0)
}

/// Ordinary least squares of `y` on `x_k`.
pub fn ols_fit(x_k: &Matrix, y: &[f64]) -> Result<FitResult> {
    check_rows(x_k, y.len(), "response length")?;
    let qr = Qr::new(x_k)?;
    Ok(ols_with_qr(x_k, &qr, y))
}

pub(crate) fn ols_with_qr(x_k: &Matrix, qr: &Qr, y: &[f64]) -> FitResult {
    let beta = qr.solve_least_squares(y);
    let resid: Vec<f64> = x_k.mul_vec(&beta).iter().zip(y).map(|(f, y)| y - f).collect();
    let mut rss = dot(&resid, &resid);
    // Residuals at rounding level of the response count as an exact fit.
    if rss <= 1e-26 * dot(y, y) {
        rss = 0.0;
    }
    let normal = norm_inf(&x_k.tr_mul_vec(&resid));
    FitResult::unplaced(beta, gaussian_loglik(rss, y.len()), true, 1, normal)
}

/// Least-squares fit of one candidate model from the full design.
pub fn ols_fit_model(x: &Matrix, y: &[f64], model: &CandidateModel) -> Result<FitResult> {
    let x_k = subset_columns(x, model)?;
    ols_fit(&x_k, y)
        .map_err(|e| e.with_model(model.included()))?
        .for_model(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFullFit {
    pub beta_full: Vec<f64>,
    /// `‖y − Xβ̂‖² / n`.
    pub sigma2: f64,
    pub fitted: Vec<f64>,
}

impl LinearFullFit {
    pub fn sigma(&self) -> f64 {
        libm::sqrt(self.sigma2)
    }
}

/// Full-model least squares with the residual variance on divisor `n`.
pub fn full_linear_fit(x: &Matrix, y: &[f64]) -> Result<LinearFullFit> {
    check_rows(x, y.len(), "response length")?;
    let qr = Qr::new(x)?;
    let beta_full = qr.solve_least_squares(y);
    let fitted = x.mul_vec(&beta_full);
    let rss: f64 = fitted.iter().zip(y).map(|(f, y)| (y - f) * (y - f)).sum();
    Ok(LinearFullFit {
        beta_full,
        sigma2: rss / y.len() as f64,
        fitted,
    })
}

/// Population least-squares coefficients of `x_k` when the mean is `x β`:
/// `(X_kᵀX_k)⁻¹ X_kᵀ X β`.
pub fn pseudo_true_linear(x_k: &Matrix, x: &Matrix, beta: &[f64]) -> Result<Vec<f64>> {
    if beta.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            context: "coefficient length",
            expected: x.ncols(),
            found: beta.len(),
        });
    }
    check_rows(x_k, x.nrows(), "design rows")?;
    let mean = x.mul_vec(beta);
    Ok(Qr::new(x_k)?.solve_least_squares(&mean))
}

/// `1 / (1 + e^{−η})` without overflow for any finite `η`.
#[inline]
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + libm::exp(-eta))
    } else {
        let e = libm::exp(eta);
        e / (1.0 + e)
    }
}

/// `log(1 + e^{η})` without overflow.
#[inline]
pub fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + libm::log1p(libm::exp(-eta))
    } else {
        libm::log1p(libm::exp(eta))
    }
}

/// Logistic probability at a point, `p(xᵀβ)`.
pub fn logistic_prob(x: &[f64], beta: &[f64]) -> Result<f64> {
    if x.len() != beta.len() {
        return Err(Error::DimensionMismatch {
            context: "point length",
            expected: beta.len(),
            found: x.len(),
        });
    }
    Ok(sigmoid(dot(x, beta)))
}

/// Probabilities strictly inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::InvalidArgument(alloc::format!(
                "probability {p} at position {i} is outside (0, 1)"
            )));
        }
        Ok(ProbVector(probs))
    }

    /// Fitted probabilities `p(Xβ)`.
    pub fn fitted(x: &Matrix, beta: &[f64]) -> Result<Self> {
        ProbVector::new(x.mul_vec(beta).into_iter().map(sigmoid).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `p(1 − p)` per component.
    pub fn variances(&self) -> Vec<f64> {
        self.0.iter().map(|p| p * (1.0 - p)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_iterations: usize,
    /// Convergence threshold on `‖Xᵀ(t − p)‖_∞`.
    pub tolerance: f64,
    /// A coefficient above this magnitude is treated as separation.
    pub max_coefficient: f64,
    pub max_halvings: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            max_iterations: 100,
            tolerance: 1e-8,
            max_coefficient: 30.0,
            max_halvings: 40,
        }
    }
}

/// `Σ tᵢ ηᵢ − log(1 + e^{ηᵢ})`.
pub fn logistic_objective(eta: &[f64], target: &[f64]) -> f64 {
    eta.iter().zip(target).map(|(e, t)| t * e - softplus(*e)).sum()
}

/// Trace of one Newton run, exposed for tests of monotonicity.
#[derive(Debug, Clone, Default)]
pub struct NewtonTrace {
    pub objective: Vec<f64>,
}

fn logistic_newton(
    x_k: &Matrix,
    target: &[f64],
    opts: &IrlsOptions,
    mut trace: Option<&mut NewtonTrace>,
) -> Result<FitResult> {
    check_rows(x_k, target.len(), "target length")?;
    let d = x_k.ncols();
    let mut beta = vec![0.0; d];
    let mut eta = vec![0.0; x_k.nrows()];
    let mut obj = logistic_objective(&eta, target);

    for iter in 0..=opts.max_iterations {
        if let Some(t) = trace.as_deref_mut() {
            t.objective.push(obj);
        }
        let p: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
        let resid: Vec<f64> = target.iter().zip(&p).map(|(t, p)| t - p).collect();
        let score = x_k.tr_mul_vec(&resid);
        let res_norm = norm_inf(&score);
        if !res_norm.is_finite() {
            return Err(Error::NonFinite("logistic score"));
        }
        if res_norm <= opts.tolerance {
            // Fitted probabilities reproducing a 0/1 response mean the data
            // are separated and the MLE only exists at infinity.
            let binary = target.iter().all(|t| *t == 0.0 || *t == 1.0);
            if binary && norm_inf(&resid) < 1e-6 {
                return Err(Error::Separation {
                    model: ModelLabel::default(),
                    magnitude: norm_inf(&beta),
                });
            }
            return Ok(FitResult::unplaced(beta, obj, true, iter, res_norm));
        }
        if iter == opts.max_iterations {
            return Err(Error::NotConverged {
                model: ModelLabel::default(),
                iterations: iter,
                residual: res_norm,
            });
        }

        let sqrt_w: Vec<f64> = p.iter().map(|p| libm::sqrt(p * (1.0 - p))).collect();
        let weighted = x_k.scale_rows(&sqrt_w);
        let step = match Qr::new(&weighted) {
            Ok(qr) => qr.gram_solve(&score),
            Err(Error::SingularDesign { .. }) => {
                return Err(Error::Separation {
                    model: ModelLabel::default(),
                    magnitude: norm_inf(&beta),
                })
            }
            Err(e) => return Err(e),
        };

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_eta = x_k.mul_vec(&cand);
            let cand_obj = logistic_objective(&cand_eta, target);
            if cand_obj >= obj - 1e-12 * (1.0 + libm::fabs(obj)) {
                beta = cand;
                eta = cand_eta;
                obj = f64::max(obj, cand_obj);
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::NotConverged {
                model: ModelLabel::default(),
                iterations: iter + 1,
                residual: res_norm,
            });
        }
        let mag = norm_inf(&beta);
        if mag > opts.max_coefficient {
            return Err(Error::Separation {
                model: ModelLabel::default(),
                magnitude: mag,
            });
        }
    }
    unreachable!("loop returns on its last iteration")
}

fn check_binary(y: &[f64]) -> Result<()> {
    if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| **v != 0.0 && **v != 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "logistic response must be 0 or 1, found {v} at row {i}"
        )));
    }
    Ok(())
}

/// Logistic maximum likelihood on 0/1 responses.
pub fn logistic_mle(x_k: &Matrix, y: &[f64]) -> Result<FitResult> {
    logistic_mle_with(x_k, y, &IrlsOptions::default())
}

pub fn logistic_mle_with(x_k: &Matrix, y: &[f64], opts: &IrlsOptions) -> Result<FitResult> {
    check_binary(y)?;
    logistic_newton(x_k, y, opts, None)
}

/// As [`logistic_mle`], also recording the objective at every iterate.
pub fn logistic_mle_traced(x_k: &Matrix, y: &[f64], trace: &mut NewtonTrace) -> Result<FitResult> {
    check_binary(y)?;
    logistic_newton(x_k, y, &IrlsOptions::default(), Some(trace))
}

/// Solves `X_kᵀ(p_target − p(X_kβ)) = 0` by IRLS.
pub fn logistic_pseudo_fit(x_k: &Matrix, p_target: &ProbVector) -> Result<FitResult> {
    logistic_pseudo_fit_with(x_k, p_target, &IrlsOptions::default())
}

pub fn logistic_pseudo_fit_with(
    x_k: &Matrix,
    p_target: &ProbVector,
    opts: &IrlsOptions,
) -> Result<FitResult> {
    let mut fit = logistic_newton(x_k, p_target.as_slice(), opts, None)?;
    // The pseudo-objective is not a likelihood of any observed data.
    fit.loglik = f64::NAN;
    Ok(fit)
}

/// Logistic MLE of one candidate model from the full design.
pub fn logistic_mle_model(x: &Matrix, y: &[f64], model: &CandidateModel) -> Result<FitResult> {
    let x_k = subset_columns(x, model)?;
    logistic_mle(&x_k, y)
        .map_err(|e| e.with_model(model.included()))?
        .for_model(model)
}

/// Pseudo-fit of one candidate model from the full design.
pub fn logistic_pseudo_fit_model(
    x: &Matrix,
    p_target: &ProbVector,
    model: &CandidateModel,
) -> Result<FitResult> {
    let x_k = subset_columns(x, model)?;
    logistic_pseudo_fit(&x_k, p_target)
        .map_err(|e| e.with_model(model.included()))?
        .for_model(model)
}
