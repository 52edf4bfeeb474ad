//! The model-averaging estimator and prediction bands built on it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model_space::ModelSet;
use crate::rng::{stream, Purpose};
use crate::weights::{
    aic_weights, equal_weights, solve_simplex_qp, LinearFits, LogisticFits, QuadraticForm,
    WeightSolution,
};

/// Scalar target of estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Functional {
    /// `x*ᵀβ`
    LinearPoint(Vec<f64>),
    /// `p(x*ᵀβ)`
    LogisticPoint(Vec<f64>),
    /// `β_j`, the linear functional with a unit vector.
    Coordinate(usize),
}

impl Functional {
    /// The point `x*` the functional evaluates at, given the full dimension.
    pub fn point(&self, full_dim: usize) -> Result<Vec<f64>> {
        let check = |len: usize| {
            if len != full_dim {
                Err(Error::DimensionMismatch {
                    context: "functional point length",
                    expected: full_dim,
                    found: len,
                })
            } else {
                Ok(())
            }
        };
        match self {
            Functional::LinearPoint(x) | Functional::LogisticPoint(x) => {
                check(x.len())?;
                Ok(x.clone())
            }
            Functional::Coordinate(j) => {
                if *j >= full_dim {
                    return Err(Error::InvalidArgument(format!(
                        "coordinate {j} out of range for dimension {full_dim}"
                    )));
                }
                let mut e = vec![0.0; full_dim];
                e[*j] = 1.0;
                Ok(e)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Minimizer of the estimated risk over the simplex.
    Optimal,
    /// Smoothed AIC.
    Aic,
    Equal,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Optimal => "optimal",
            Scheme::Aic => "aic",
            Scheme::Equal => "equal",
        }
    }
}

impl core::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "optimal" => Ok(Scheme::Optimal),
            "aic" => Ok(Scheme::Aic),
            "equal" => Ok(Scheme::Equal),
            other => Err(Error::InvalidArgument(format!(
                "unknown weighting scheme {other:?} (expected optimal, aic or equal)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedEstimate {
    pub value: f64,
    pub scheme: Scheme,
    pub weights: Vec<f64>,
    /// The functional under each model's own fit.
    pub per_model: Vec<f64>,
    pub q_hat: QuadraticForm,
    /// Present for the optimal scheme.
    pub solution: Option<WeightSolution>,
}

/// `Σ_k w_k μ_k`.
pub fn average_estimate(weights: &[f64], per_model: &[f64]) -> Result<f64> {
    if weights.len() != per_model.len() {
        return Err(Error::DimensionMismatch {
            context: "weights vs per-model estimates",
            expected: per_model.len(),
            found: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= -1e-9)) || libm::fabs(total - 1.0) > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "weights are off the simplex (sum {total})"
        )));
    }
    Ok(weights.iter().zip(per_model).map(|(w, m)| w * m).sum())
}

fn select_weights(
    scheme: Scheme,
    q_hat: &QuadraticForm,
    fits: &[crate::glm::FitResult],
) -> Result<(Vec<f64>, Option<WeightSolution>)> {
    match scheme {
        Scheme::Optimal => {
            let sol = solve_simplex_qp(q_hat)?;
            Ok((sol.weights.clone(), Some(sol)))
        }
        Scheme::Aic => Ok((aic_weights(fits)?, None)),
        Scheme::Equal => Ok((equal_weights(fits.len())?, None)),
    }
}

/// Averaged estimate from linear fits already in hand.
pub fn average_linear_fits(fits: &LinearFits, x_star: &[f64], scheme: Scheme) -> Result<AveragedEstimate> {
    let analysis = fits.analyze(x_star)?;
    let (weights, solution) = select_weights(scheme, &analysis.q_hat, fits.fits())?;
    Ok(AveragedEstimate {
        value: average_estimate(&weights, &analysis.estimates)?,
        scheme,
        weights,
        per_model: analysis.estimates,
        q_hat: analysis.q_hat,
        solution,
    })
}

/// Fits every model by least squares and averages `x*_kᵀβ̂_k`.
pub fn fit_and_average_linear(
    x: &Matrix,
    y: &[f64],
    models: &ModelSet,
    functional: &Functional,
    scheme: Scheme,
) -> Result<AveragedEstimate> {
    let x_star = match functional {
        Functional::LinearPoint(_) | Functional::Coordinate(_) => functional.point(models.full_dim())?,
        Functional::LogisticPoint(_) => {
            return Err(Error::InvalidArgument(
                "logistic functional passed to the linear family".into(),
            ))
        }
    };
    average_linear_fits(&LinearFits::new(x, y, models)?, &x_star, scheme)
}

/// Averaged estimate from logistic fits already in hand.
pub fn average_logistic_fits(fits: &LogisticFits, x_star: &[f64], scheme: Scheme) -> Result<AveragedEstimate> {
    let analysis = fits.analyze(x_star)?;
    let (weights, solution) = select_weights(scheme, &analysis.q_hat, fits.fits())?;
    Ok(AveragedEstimate {
        value: average_estimate(&weights, &analysis.estimates)?,
        scheme,
        weights,
        per_model: analysis.estimates,
        q_hat: analysis.q_hat,
        solution,
    })
}

/// Fits every model by logistic MLE and averages `p(x*_kᵀβ̂_k)`.
pub fn fit_and_average_logistic(
    x: &Matrix,
    y: &[f64],
    models: &ModelSet,
    functional: &Functional,
    scheme: Scheme,
) -> Result<AveragedEstimate> {
    let x_star = match functional {
        Functional::LogisticPoint(p) => {
            Functional::LinearPoint(p.clone()).point(models.full_dim())?
        }
        _ => {
            return Err(Error::InvalidArgument(
                "logistic family needs a logistic_point functional".into(),
            ))
        }
    };
    average_logistic_fits(&LogisticFits::new(x, y, models)?, &x_star, scheme)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBand {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandConfig {
    /// Rows drawn without replacement from the pool in each replication.
    pub n_sub: usize,
    pub n_reps: usize,
    /// Standard deviation of the noise added to each predicted mean.
    pub sigma: f64,
    pub level: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

impl BandConfig {
    pub fn new(sigma: f64, seed: u64) -> Self {
        BandConfig {
            n_sub: 50,
            n_reps: 50,
            sigma,
            level: 0.9,
            seed,
            scheme: Scheme::Optimal,
        }
    }
}

/// Linear-interpolation quantile of sorted data (`h = (n − 1)p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = usize::min(lo + 1, n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Replicated-subsample prediction bands for several test points.
///
/// Replication `r` draws `n_sub` pool rows without replacement from stream
/// `(seed, Subsample, r)`, averages the candidate fits at every test point,
/// and adds one `N(0, σ²)` draw per test point from stream
/// `(seed, BandNoise, r)`. Band limits are the empirical `(1 ∓ level)/2`
/// quantiles of the noisy predictions; the point is the mean of the
/// noise-free predicted means.
pub fn prediction_bands(
    pool_x: &Matrix,
    pool_y: &[f64],
    models: &ModelSet,
    test_points: &[Vec<f64>],
    cfg: &BandConfig,
) -> Result<Vec<PredictionBand>> {
    let pool = pool_x.nrows();
    if pool_y.len() != pool {
        return Err(Error::DimensionMismatch {
            context: "pool response length",
            expected: pool,
            found: pool_y.len(),
        });
    }
    if cfg.n_sub > pool || cfg.n_sub == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {} rows from a pool of {pool}",
            cfg.n_sub
        )));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::InvalidArgument(format!("band level {} not in (0, 1)", cfg.level)));
    }
    if cfg.n_reps == 0 {
        return Err(Error::InvalidArgument("band needs at least one replication".into()));
    }
    if !(cfg.sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sd {} is negative", cfg.sigma)));
    }

    let t = test_points.len();
    let mut means = vec![Vec::with_capacity(cfg.n_reps); t];
    let mut noisy = vec![Vec::with_capacity(cfg.n_reps); t];
    for r in 0..cfg.n_reps as u64 {
        let mut sub_rng = stream(cfg.seed, Purpose::Subsample, r);
        let mut rows = index::sample(&mut sub_rng, pool, cfg.n_sub).into_vec();
        rows.sort_unstable();
        let x = pool_x.select_rows(&rows);
        let y: Vec<f64> = rows.iter().map(|&i| pool_y[i]).collect();
        let fits = LinearFits::new(&x, &y, models)?;
        let mut noise_rng = stream(cfg.seed, Purpose::BandNoise, r);
        for (i, point) in test_points.iter().enumerate() {
            let mean = average_linear_fits(&fits, point, cfg.scheme)?.value;
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            means[i].push(mean);
            noisy[i].push(mean + cfg.sigma * z);
        }
    }

    let lo_p = 0.5 * (1.0 - cfg.level);
    let hi_p = 0.5 * (1.0 + cfg.level);
    Ok(means
        .into_iter()
        .zip(noisy)
        .map(|(m, mut draws)| {
            draws.sort_unstable_by(f64::total_cmp);
            PredictionBand {
                point: m.iter().sum::<f64>() / m.len() as f64,
                lower: quantile_sorted(&draws, lo_p),
                upper: quantile_sorted(&draws, hi_p),
                level: cfg.level,
            }
        })
        .collect())
}

/// Band for a single test point.
pub fn prediction_band(
    pool_x: &Matrix,
    pool_y: &[f64],
    models: &ModelSet,
    test_point: &[f64],
    cfg: &BandConfig,
) -> Result<PredictionBand> {
    let mut bands = prediction_bands(pool_x, pool_y, models, &[test_point.to_vec()], cfg)?;
    Ok(bands.remove(0))
}
